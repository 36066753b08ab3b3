//! Raster grids with a ground sample distance and a world anchor.
//!
//! The world frame is a local planar meter grid with +x east, +y north and
//! +z up. A raster's `anchor` is the world position of the outer top-left
//! corner of pixel (0, 0); rows run southwards, so the center of pixel
//! (col, row) sits at `(ax + (col + 0.5) * gsd, ay - (row + 0.5) * gsd)`.
//! Keeping the anchor on the corner makes it invariant under integer
//! up- and downsampling.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// 2D scalar or vector field, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    channels: usize,
    gsd: f64,
    anchor: [f64; 2],
    data: Vec<f64>,
}

/// Integer rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x: i64, y: i64, width: usize, height: usize) -> Self {
        PixelRect { x, y, width, height }
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width as i64 && y < self.y + self.height as i64
    }

    pub fn right(&self) -> i64 {
        self.x + self.width as i64
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.height as i64
    }
}

impl RasterGrid {
    pub fn zeros(width: usize, height: usize, channels: usize, gsd: f64, anchor: [f64; 2]) -> Result<Self> {
        Self::filled(width, height, channels, gsd, anchor, 0.0)
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        gsd: f64,
        anchor: [f64; 2],
        value: f64,
    ) -> Result<Self> {
        Self::from_data(width, height, channels, gsd, anchor, vec![value; width * height * channels])
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        gsd: f64,
        anchor: [f64; 2],
        data: Vec<f64>,
    ) -> Result<Self> {
        if !(gsd > 0.0) || !gsd.is_finite() {
            return Err(Error::Domain(format!("ground sample distance must be positive, got {gsd}")));
        }
        if channels == 0 {
            return Err(Error::Contract("raster needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Contract(format!(
                "raster data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(RasterGrid { width, height, channels, gsd, anchor, data })
    }

    /// Raster with unit gsd anchored at the origin; handy for image-space buffers.
    pub fn image(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_data(width, height, channels, 1.0, [0.0, 0.0], data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn gsd(&self) -> f64 {
        self.gsd
    }

    pub fn anchor(&self) -> [f64; 2] {
        self.anchor
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &RasterGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &RasterGrid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "{what}: shape {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// World extent in meters (east-west, north-south).
    pub fn world_extent(&self) -> [f64; 2] {
        [self.width as f64 * self.gsd, self.height as f64 * self.gsd]
    }

    /// Integer world pixel index of pixel (0, 0) at this raster's gsd.
    pub fn world_origin_px(&self) -> [i64; 2] {
        [(self.anchor[0] / self.gsd).round() as i64, (-self.anchor[1] / self.gsd).round() as i64]
    }

    /// Anchor of a raster whose pixel (0, 0) has world pixel index `origin` at `gsd`.
    pub fn anchor_for(origin: [i64; 2], gsd: f64) -> [f64; 2] {
        [origin[0] as f64 * gsd, -(origin[1] as f64) * gsd]
    }

    /// World (x, y) of the center of pixel (col, row); fractional indices allowed.
    pub fn pixel_center_world(&self, col: f64, row: f64) -> [f64; 2] {
        [self.anchor[0] + (col + 0.5) * self.gsd, self.anchor[1] - (row + 0.5) * self.gsd]
    }

    /// Continuous pixel coordinates of a world point (pixel centers are integers).
    pub fn world_to_pixel(&self, x: f64, y: f64) -> [f64; 2] {
        [(x - self.anchor[0]) / self.gsd - 0.5, (self.anchor[1] - y) / self.gsd - 0.5]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y, 0);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Same geometry, different payload.
    pub fn with_data(&self, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_data(self.width, self.height, channels, self.gsd, self.anchor, data)
    }

    pub fn with_gsd_anchor(mut self, gsd: f64, anchor: [f64; 2]) -> Result<Self> {
        if !(gsd > 0.0) {
            return Err(Error::Domain(format!("ground sample distance must be positive, got {gsd}")));
        }
        self.gsd = gsd;
        self.anchor = anchor;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn extract_channel(&self, c: usize) -> Result<Self> {
        if c >= self.channels {
            return Err(Error::Contract(format!("channel {c} out of {}", self.channels)));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        self.with_data(1, data)
    }

    /// Channel-wise concatenation of rasters with identical width/height.
    pub fn concat_channels(parts: &[&RasterGrid]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Contract("nothing to concatenate".into()))?;
        for p in parts {
            if p.width != first.width || p.height != first.height {
                return Err(Error::Contract("channel concatenation needs equal spatial size".into()));
            }
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.pixel_count() * channels);
        for i in 0..first.pixel_count() {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        first.with_data(channels, data)
    }

    /// Mean over channels, producing a one-channel raster.
    pub fn channel_mean(&self) -> Self {
        let c = self.channels as f64;
        let data = self.data.chunks(self.channels).map(|px| px.iter().sum::<f64>() / c).collect();
        self.with_data(1, data).expect("same geometry")
    }

    /// Replicates a one-channel raster into `channels` channels.
    pub fn replicate_channels(&self, channels: usize) -> Result<Self> {
        if self.channels != 1 {
            return Err(Error::Contract("replicate_channels needs a single-channel raster".into()));
        }
        let data = self.data.iter().flat_map(|v| std::iter::repeat(*v).take(channels)).collect();
        self.with_data(channels, data)
    }

    /// Sub-raster; the rectangle may extend past the borders, in which case
    /// edge pixels are replicated.
    pub fn crop_clamped(&self, rect: PixelRect) -> Self {
        let mut data = Vec::with_capacity(rect.width * rect.height * self.channels);
        for j in 0..rect.height as i64 {
            let sy = (rect.y + j).clamp(0, self.height as i64 - 1) as usize;
            for i in 0..rect.width as i64 {
                let sx = (rect.x + i).clamp(0, self.width as i64 - 1) as usize;
                data.extend_from_slice(self.pixel(sx, sy));
            }
        }
        let origin = self.world_origin_px();
        let anchor = Self::anchor_for([origin[0] + rect.x, origin[1] + rect.y], self.gsd);
        RasterGrid::from_data(rect.width, rect.height, self.channels, self.gsd, anchor, data)
            .expect("crop keeps invariants")
    }

    /// Writes `src` into this raster with its pixel (0,0) at `(x0, y0)`; parts
    /// outside are dropped.
    pub fn paste(&mut self, src: &RasterGrid, x0: i64, y0: i64) -> Result<()> {
        if src.channels != self.channels {
            return Err(Error::Contract("paste needs matching channel counts".into()));
        }
        for j in 0..src.height {
            let y = y0 + j as i64;
            if y < 0 || y >= self.height as i64 {
                continue;
            }
            for i in 0..src.width {
                let x = x0 + i as i64;
                if x < 0 || x >= self.width as i64 {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                self.pixel_mut(x, y).copy_from_slice(src.pixel(i, j));
            }
        }
        Ok(())
    }

    /// Bilinear sample with coordinates clamped into the raster, writing one
    /// value per channel into `out`.
    pub fn sample_clamped(&self, x: f64, y: f64, out: &mut [f64]) {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.sample_unchecked(x, y, out);
    }

    fn sample_unchecked(&self, x: f64, y: f64, out: &mut [f64]) {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let v00 = self.get(x0, y0, c);
            let v10 = self.get(x1, y0, c);
            let v01 = self.get(x0, y1, c);
            let v11 = self.get(x1, y1, c);
            let top = v00 + (v10 - v00) * fx;
            let bottom = v01 + (v11 - v01) * fx;
            *o = top + (bottom - top) * fy;
        }
    }

    /// Bilinear upsampling by an integer factor with pixel centers aligned
    /// (edge replication at the border). Anchor and world extent are preserved.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        let origin = self.world_origin_px();
        let rect = PixelRect::new(
            origin[0] * factor as i64,
            origin[1] * factor as i64,
            self.width * factor,
            self.height * factor,
        );
        self.upsample_region(factor, rect)
    }

    /// Bilinear upsampling restricted to `region`, given in world pixel
    /// indices at the upsampled resolution. Values match [`Self::upsample`]
    /// wherever the region overlaps the full upsampled raster.
    pub fn upsample_region(&self, factor: usize, region: PixelRect) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Contract("upsampling factor must be positive".into()));
        }
        let fine_gsd = self.gsd / factor as f64;
        let origin = self.world_origin_px();
        let f = factor as f64;
        let c = self.channels;
        let mut data = vec![0.0; region.width * region.height * c];
        let mut px = vec![0.0; c];
        for j in 0..region.height {
            let gy = region.y + j as i64 - origin[1] * factor as i64;
            let sy = (gy as f64 + 0.5) / f - 0.5;
            for i in 0..region.width {
                let gx = region.x + i as i64 - origin[0] * factor as i64;
                let sx = (gx as f64 + 0.5) / f - 0.5;
                self.sample_clamped(sx, sy, &mut px);
                let o = (j * region.width + i) * c;
                data[o..o + c].copy_from_slice(&px);
            }
        }
        let anchor = Self::anchor_for([region.x, region.y], fine_gsd);
        RasterGrid::from_data(region.width, region.height, c, fine_gsd, anchor, data)
    }

    /// Box-filter downsampling by an integer factor; trailing partial blocks are dropped.
    pub fn box_downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.width < factor || self.height < factor {
            return Err(Error::Contract(format!("cannot downsample {}x{} by {factor}", self.width, self.height)));
        }
        let (w, h, c) = (self.width / factor, self.height / factor, self.channels);
        let norm = (factor * factor) as f64;
        let mut data = vec![0.0; w * h * c];
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    let mut acc = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += self.get(x * factor + dx, y * factor + dy, k);
                        }
                    }
                    data[(y * w + x) * c + k] = acc / norm;
                }
            }
        }
        RasterGrid::from_data(w, h, c, self.gsd * factor as f64, self.anchor, data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Bilinear blend of the four texels around `(x, y)`, one value per channel.
/// Coordinates are pixel-center based and must lie inside
/// `[0, width-1] x [0, height-1]`.
pub fn bilinear_sample(raster: &RasterGrid, x: f64, y: f64) -> Result<Vec<f64>> {
    let in_range = |v: f64, n: usize| v.is_finite() && v >= 0.0 && v <= (n - 1) as f64;
    if raster.width == 0 || raster.height == 0 || !in_range(x, raster.width) || !in_range(y, raster.height) {
        return Err(Error::SampleOutOfRange { x, y, width: raster.width, height: raster.height });
    }
    let mut out = vec![0.0; raster.channels];
    raster.sample_unchecked(x, y, &mut out);
    Ok(out)
}
