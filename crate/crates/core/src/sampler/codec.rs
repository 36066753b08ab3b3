//! Latent codecs.
//!
//! The built-in codec is a weight-free, exactly invertible block transform:
//! each `f x f` block of each image channel maps to `f²` orthonormal DCT-II
//! coefficients, stored as the channels of one latent pixel. Latent pixel
//! `(u, v)` therefore depends on image block `(f u .. f u + f, f v .. f v + f)`
//! and nothing else.

use crate::error::{Error, Result};
use crate::grid::RasterGrid;

pub trait LatentCodec: Send + Sync {
    /// Spatial downsampling factor `f`.
    fn factor(&self) -> usize;
    /// Latent channel count for an image with `channels` channels.
    fn latent_channels(&self, channels: usize) -> usize;
    /// Whether latent pixel `(u, v)` depends only on image block `(f u, f v)`.
    fn is_block_local(&self) -> bool;
    fn encode(&self, image: &RasterGrid) -> Result<RasterGrid>;
    fn decode(&self, latent: &RasterGrid, channels: usize) -> Result<RasterGrid>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDctCodec {
    factor: usize,
    basis: Vec<f64>,
}

impl BlockDctCodec {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Contract("codec factor must be positive".into()));
        }
        let n = factor as f64;
        let mut basis = vec![0.0; factor * factor];
        for k in 0..factor {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for i in 0..factor {
                basis[k * factor + i] =
                    scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
            }
        }
        Ok(BlockDctCodec { factor, basis })
    }

    #[inline]
    fn d(&self, k: usize, i: usize) -> f64 {
        self.basis[k * self.factor + i]
    }

    /// Orthonormal 2D transform of one block (row-major `f x f`).
    fn forward_block(&self, block: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let f = self.factor;
        // rows: tmp[y][kx] = sum_x d(kx, x) block[y][x]
        for y in 0..f {
            for kx in 0..f {
                let mut acc = self.d(kx, 0) * block[y * f];
                for x in 1..f {
                    acc += self.d(kx, x) * block[y * f + x];
                }
                tmp[y * f + kx] = acc;
            }
        }
        for ky in 0..f {
            for kx in 0..f {
                let mut acc = self.d(ky, 0) * tmp[kx];
                for y in 1..f {
                    acc += self.d(ky, y) * tmp[y * f + kx];
                }
                out[ky * f + kx] = acc;
            }
        }
    }

    fn inverse_block(&self, coef: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let f = self.factor;
        // columns: tmp[y][kx] = sum_ky d(ky, y) coef[ky][kx]
        for y in 0..f {
            for kx in 0..f {
                let mut acc = self.d(0, y) * coef[kx];
                for ky in 1..f {
                    acc += self.d(ky, y) * coef[ky * f + kx];
                }
                tmp[y * f + kx] = acc;
            }
        }
        for y in 0..f {
            for x in 0..f {
                let mut acc = self.d(0, x) * tmp[y * f];
                for kx in 1..f {
                    acc += self.d(kx, x) * tmp[y * f + kx];
                }
                out[y * f + x] = acc;
            }
        }
    }
}

impl LatentCodec for BlockDctCodec {
    fn factor(&self) -> usize {
        self.factor
    }

    fn latent_channels(&self, channels: usize) -> usize {
        channels * self.factor * self.factor
    }

    fn is_block_local(&self) -> bool {
        true
    }

    fn encode(&self, image: &RasterGrid) -> Result<RasterGrid> {
        let f = self.factor;
        if image.width() % f != 0 || image.height() % f != 0 {
            return Err(Error::Contract(format!(
                "image {}x{} not divisible by codec factor {f}",
                image.width(),
                image.height()
            )));
        }
        let (lw, lh, c) = (image.width() / f, image.height() / f, image.channels());
        let lc = self.latent_channels(c);
        let mut data = vec![0.0; lw * lh * lc];
        let mut block = vec![0.0; f * f];
        let mut coef = vec![0.0; f * f];
        let mut tmp = vec![0.0; f * f];
        for v in 0..lh {
            for u in 0..lw {
                for ch in 0..c {
                    for y in 0..f {
                        for x in 0..f {
                            block[y * f + x] = image.get(u * f + x, v * f + y, ch);
                        }
                    }
                    self.forward_block(&block, &mut coef, &mut tmp);
                    let o = (v * lw + u) * lc + ch * f * f;
                    data[o..o + f * f].copy_from_slice(&coef);
                }
            }
        }
        RasterGrid::from_data(lw, lh, lc, image.gsd() * f as f64, image.anchor(), data)
    }

    fn decode(&self, latent: &RasterGrid, channels: usize) -> Result<RasterGrid> {
        let f = self.factor;
        if latent.channels() != self.latent_channels(channels) {
            return Err(Error::Contract(format!(
                "latent has {} channels, expected {} for {channels} image channels",
                latent.channels(),
                self.latent_channels(channels)
            )));
        }
        let (w, h) = (latent.width() * f, latent.height() * f);
        let mut data = vec![0.0; w * h * channels];
        let mut px = vec![0.0; f * f];
        let mut tmp = vec![0.0; f * f];
        for v in 0..latent.height() {
            for u in 0..latent.width() {
                let base = latent.index(u, v, 0);
                for ch in 0..channels {
                    let coef = &latent.data()[base + ch * f * f..base + (ch + 1) * f * f];
                    self.inverse_block(coef, &mut px, &mut tmp);
                    for y in 0..f {
                        for x in 0..f {
                            data[((v * f + y) * w + u * f + x) * channels + ch] = px[y * f + x];
                        }
                    }
                }
            }
        }
        RasterGrid::from_data(w, h, channels, latent.gsd() / f as f64, latent.anchor(), data)
    }
}
