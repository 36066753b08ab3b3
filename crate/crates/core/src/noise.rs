//! World-anchored Gaussian noise.
//!
//! Every value is a pure function of `(seed, level, timestep, x, y, channel)`
//! computed by hashing the coordinates (a counter-based generator), so two
//! windows that overlap in world space read exactly the same noise no matter
//! which window is processed first or on which thread.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Timestep values reserved for auxiliary noise streams, kept far above any
/// diffusion timestep.
pub mod stream {
    pub const DETAIL: u32 = 0xffff_0001;
    pub const DETAIL_FINE: u32 = 0xffff_0002;
    pub const ANCHOR: u32 = 0xffff_0010;
    pub const EMBEDDING: u32 = 0xffff_0020;
    pub const QA: u32 = 0xffff_0030;
    pub const FACADE: u32 = 0xffff_0040;
    pub const DDPM: u32 = 0xffff_0050;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, word: u64, lane: u64) -> u64 {
    mix64(h ^ mix64(word.wrapping_add(lane.wrapping_mul(GOLDEN))))
}

/// Hash of an arbitrary list of words under a seed.
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for (lane, w) in words.iter().enumerate() {
        h = absorb(h, *w, lane as u64 + 1);
    }
    h
}

/// Maps a 64-bit hash to a uniform in the open interval (0, 1).
#[inline]
pub fn unit_open(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Hashes a string label into a 64-bit word (FNV-1a).
pub fn label_word(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseField {
    pub seed: u64,
}

impl NoiseField {
    pub fn new(seed: u64) -> Self {
        NoiseField { seed }
    }

    /// Derived field, independent of this one, for the given label.
    pub fn fork(&self, label: u64) -> Self {
        NoiseField { seed: hash_words(self.seed, &[0x666f_726b, label]) }
    }

    #[inline]
    fn key(&self, level: u32, timestep: u32, x: i64, y: i64, channel: u32) -> u64 {
        let mut h = mix64(self.seed.wrapping_add(GOLDEN));
        h = absorb(h, level as u64, 1);
        h = absorb(h, timestep as u64, 2);
        h = absorb(h, x as u64, 3);
        h = absorb(h, y as u64, 4);
        absorb(h, channel as u64, 5)
    }

    /// Uniform value in (0, 1) at the given coordinate.
    #[inline]
    pub fn uniform(&self, level: u32, timestep: u32, x: i64, y: i64, channel: u32) -> f64 {
        unit_open(mix64(self.key(level, timestep, x, y, channel) ^ 0x75))
    }

    /// Standard normal value at the given coordinate (Box-Muller on two
    /// independent hashes of the key).
    #[inline]
    pub fn draw(&self, level: u32, timestep: u32, x: i64, y: i64, channel: u32) -> f64 {
        let k = self.key(level, timestep, x, y, channel);
        let u1 = unit_open(mix64(k ^ 0x1));
        let u2 = unit_open(mix64(k ^ 0x2));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Interleaved `width x height x channels` block of draws whose pixel
    /// (0, 0) sits at world pixel `origin`.
    pub fn fill(&self, level: u32, timestep: u32, origin: [i64; 2], width: usize, height: usize, channels: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(width * height * channels);
        for j in 0..height as i64 {
            for i in 0..width as i64 {
                for c in 0..channels as u32 {
                    out.push(self.draw(level, timestep, origin[0] + i, origin[1] + j, c));
                }
            }
        }
        out
    }

    /// Bilinearly interpolated lattice noise ("value noise") at a continuous
    /// world pixel position; lattice nodes sit every `spacing` pixels.
    pub fn value_noise(&self, level: u32, timestep: u32, x: f64, y: f64, spacing: f64, channel: u32) -> f64 {
        let gx = x / spacing;
        let gy = y / spacing;
        let x0 = gx.floor();
        let y0 = gy.floor();
        let fx = gx - x0;
        let fy = gy - y0;
        let (ix, iy) = (x0 as i64, y0 as i64);
        let n00 = self.draw(level, timestep, ix, iy, channel);
        let n10 = self.draw(level, timestep, ix + 1, iy, channel);
        let n01 = self.draw(level, timestep, ix, iy + 1, channel);
        let n11 = self.draw(level, timestep, ix + 1, iy + 1, channel);
        let top = n00 + (n10 - n00) * fx;
        let bottom = n01 + (n11 - n01) * fx;
        top + (bottom - top) * fy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_addressable() {
        let f = NoiseField::new(7);
        assert_eq!(f.draw(1, 2, -5, 9, 0).to_bits(), f.draw(1, 2, -5, 9, 0).to_bits());
        assert_ne!(f.draw(1, 2, -5, 9, 0), f.draw(1, 2, -5, 9, 1));
        assert_ne!(f.draw(1, 2, -5, 9, 0), NoiseField::new(8).draw(1, 2, -5, 9, 0));
        let block = f.fill(0, 3, [10, -4], 3, 2, 2);
        assert_eq!(block[(1 * 3 + 2) * 2 + 1], f.draw(0, 3, 12, -3, 1));
    }

    #[test]
    fn standard_normal_marginal() {
        let f = NoiseField::new(0x5eed);
        let n = 1_000_000i64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n {
            let v = f.draw(0, 40, i % 1000, i / 1000, 0);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn neighbours_uncorrelated() {
        let f = NoiseField::new(99);
        let n = 200_000i64;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let a = f.draw(0, 1, i, 0, 0);
            let b = f.draw(0, 1, i + 1, 0, 0);
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / nf / nf;
        let r = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(r.abs() < 0.01, "r = {r}");
    }

    #[test]
    fn value_noise_hits_lattice() {
        let f = NoiseField::new(3);
        assert_eq!(f.value_noise(0, 5, 16.0, 24.0, 8.0, 0), f.draw(0, 5, 2, 3, 0));
    }
}
