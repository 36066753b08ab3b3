//! Procedural denoisers standing in for trained networks.
//!
//! Both backends reduce to a per-pixel Gaussian prior computed once from the
//! condition set, so the noise prediction at pixel `q` reads `x_t` only at `q`
//! and the conditioning raster only within the declared radius. That keeps the
//! receptive field from compounding over sampling steps.

use super::backend::{BoundDenoiser, Condition, Denoiser, GaussianPrior, PriorModel, ReceptiveField, Shape, Task};
use super::codec::LatentCodec;
use crate::error::{Error, Result};
use crate::noise::stream;

/// Local mean and standard deviation over a `(2r+1)²` window, edges
/// replicated. Sums run over each pixel's own window in a fixed order, so a
/// pixel's result never depends on values outside its window.
pub fn local_stats(values: &[f64], width: usize, height: usize, r: usize) -> (Vec<f64>, Vec<f64>) {
    let ri = r as i64;
    let clamp_x = |x: i64| x.clamp(0, width as i64 - 1) as usize;
    let clamp_y = |y: i64| y.clamp(0, height as i64 - 1) as usize;
    let mut row_sum = vec![0.0; width * height];
    let mut row_sq = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let (mut s, mut q) = (0.0, 0.0);
            for dx in -ri..=ri {
                let v = values[y * width + clamp_x(x as i64 + dx)];
                s += v;
                q += v * v;
            }
            row_sum[y * width + x] = s;
            row_sq[y * width + x] = q;
        }
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut mean = vec![0.0; width * height];
    let mut std = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let (mut s, mut q) = (0.0, 0.0);
            for dy in -ri..=ri {
                let i = clamp_y(y as i64 + dy) * width + x;
                s += row_sum[i];
                q += row_sq[i];
            }
            let m = s / n;
            mean[y * width + x] = m;
            std[y * width + x] = (q / n - m * m).max(0.0).sqrt();
        }
    }
    (mean, std)
}

fn luminance(cond: &crate::grid::RasterGrid) -> Vec<f64> {
    cond.data().chunks(cond.channels()).map(|px| px.iter().sum::<f64>() / px.len() as f64).collect()
}

/// Refines an upsampled condition: mean = condition + band-limited detail
/// drawn from the world noise field, with amplitude rising with local
/// contrast; small per-pixel variance (`grain²`) leaves room for the initial
/// noise to matter.
#[derive(Debug, Clone)]
pub struct FractalRefiner {
    pub radius: usize,
    /// Detail amplitude on flat areas.
    pub base_detail: f64,
    /// Extra detail per unit of local standard deviation.
    pub contrast_gain: f64,
    /// Lattice spacing of the coarse detail octave, in pixels.
    pub spacing: f64,
    pub grain: f64,
}

impl Default for FractalRefiner {
    fn default() -> Self {
        FractalRefiner { radius: 8, base_detail: 0.02, contrast_gain: 0.5, spacing: 4.0, grain: 0.02 }
    }
}

impl FractalRefiner {
    pub fn with_radius(radius: usize) -> Self {
        FractalRefiner { radius, ..Self::default() }
    }
}

impl PriorModel for FractalRefiner {
    fn prior(&self, cond: &Condition, shape: Shape) -> Result<GaussianPrior> {
        let raster = cond.require_raster(shape, Some(shape.channels))?;
        let lum = luminance(raster);
        let (_, std) = local_stats(&lum, shape.width, shape.height, self.radius);
        let mut mean = raster.data().to_vec();
        for y in 0..shape.height {
            let wy = (cond.origin_px[1] + y as i64) as f64;
            for x in 0..shape.width {
                let wx = (cond.origin_px[0] + x as i64) as f64;
                let amp = self.base_detail + self.contrast_gain * std[y * shape.width + x];
                for c in 0..shape.channels {
                    let coarse = cond.noise.value_noise(cond.level, stream::DETAIL, wx, wy, self.spacing, c as u32);
                    let fine =
                        cond.noise.value_noise(cond.level, stream::DETAIL_FINE, wx, wy, self.spacing / 2.0, c as u32);
                    mean[(y * shape.width + x) * shape.channels + c] += amp * (0.7 * coarse + 0.3 * fine);
                }
            }
        }
        GaussianPrior::uniform_var(mean, self.grain * self.grain)
    }
}

impl Denoiser for FractalRefiner {
    fn name(&self) -> &str {
        "fractal-refiner"
    }

    fn receptive_field(&self) -> ReceptiveField {
        ReceptiveField::Radius(self.radius)
    }

    fn bind<'a>(&'a self, cond: &Condition, shape: Shape) -> Result<Box<dyn BoundDenoiser + 'a>> {
        Ok(Box::new(self.prior(cond, shape)?))
    }
}

/// Height from imagery: smoothed luminance through a logistic shaping curve,
/// plus a little world noise. Output is normalized height in `[0, 1]`
/// replicated over the sample's channels; multiply by the scene's height
/// scale to get meters.
#[derive(Debug, Clone)]
pub struct ProceduralHeight {
    pub radius: usize,
    /// Luminance at which the shaping curve is half way up.
    pub midpoint: f64,
    pub steepness: f64,
    pub jitter: f64,
    pub grain: f64,
}

impl Default for ProceduralHeight {
    fn default() -> Self {
        ProceduralHeight { radius: 2, midpoint: 0.55, steepness: 12.0, jitter: 0.02, grain: 0.02 }
    }
}

impl ProceduralHeight {
    pub const PROMPT: &'static str = "predict the heights of prominent features";
}

impl PriorModel for ProceduralHeight {
    fn prior(&self, cond: &Condition, shape: Shape) -> Result<GaussianPrior> {
        let raster = cond.require_raster(shape, None)?;
        if cond.prompt.as_deref().map_or(true, |p| p.trim().is_empty()) {
            return Err(Error::Contract("height backend needs a non-empty prompt".into()));
        }
        let lum = luminance(raster);
        let (smooth, _) = local_stats(&lum, shape.width, shape.height, self.radius);
        let mut mean = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            let wy = (cond.origin_px[1] + y as i64) as f64;
            for x in 0..shape.width {
                let wx = (cond.origin_px[0] + x as i64) as f64;
                let n = cond.noise.value_noise(cond.level, stream::DETAIL, wx, wy, 8.0, 0);
                let l = smooth[y * shape.width + x] + self.jitter * n;
                let h = 1.0 / (1.0 + (-self.steepness * (l - self.midpoint)).exp());
                mean.extend(std::iter::repeat(h).take(shape.channels));
            }
        }
        GaussianPrior::uniform_var(mean, self.grain * self.grain)
    }
}

impl Denoiser for ProceduralHeight {
    fn name(&self) -> &str {
        "procedural-height"
    }

    fn receptive_field(&self) -> ReceptiveField {
        ReceptiveField::Radius(self.radius)
    }

    fn task(&self) -> Task {
        Task::Height
    }

    fn bind<'a>(&'a self, cond: &Condition, shape: Shape) -> Result<Box<dyn BoundDenoiser + 'a>> {
        Ok(Box::new(self.prior(cond, shape)?))
    }
}

/// Runs a pixel-space prior model in a codec's latent space. The condition
/// raster stays in pixel space (`f` times the latent size); the prior mean is
/// encoded, and an isotropic pixel variance carries over unchanged because
/// the block transform is orthonormal.
pub struct LatentAdapter<P, C> {
    pub model: P,
    pub codec: C,
    name: String,
}

impl<P: Denoiser + PriorModel, C: LatentCodec> LatentAdapter<P, C> {
    pub fn new(model: P, codec: C) -> Self {
        let name = format!("latent:{}", model.name());
        LatentAdapter { model, codec, name }
    }

    fn pixel_shape(&self, shape: Shape) -> Result<Shape> {
        let f = self.codec.factor();
        let per = f * f;
        if shape.channels % per != 0 {
            return Err(Error::Contract(format!("latent channel count {} not a multiple of {per}", shape.channels)));
        }
        Ok(Shape::new(shape.width * f, shape.height * f, shape.channels / per))
    }
}

impl<P: Denoiser + PriorModel, C: LatentCodec> PriorModel for LatentAdapter<P, C> {
    fn prior(&self, cond: &Condition, shape: Shape) -> Result<GaussianPrior> {
        let px = self.pixel_shape(shape)?;
        let p = self.model.prior(cond, px)?;
        let var = p.var.first().copied().unwrap_or(0.0);
        if p.var.iter().any(|v| *v != var) {
            return Err(Error::Contract("latent adapter needs an isotropic pixel variance".into()));
        }
        let raster = cond.require_raster(px, None)?;
        let mean_img = raster.with_data(px.channels, p.mean)?;
        let latent = self.codec.encode(&mean_img)?;
        GaussianPrior::uniform_var(latent.into_data(), var)
    }
}

impl<P: Denoiser + PriorModel, C: LatentCodec> Denoiser for LatentAdapter<P, C> {
    fn name(&self) -> &str {
        &self.name
    }

    fn receptive_field(&self) -> ReceptiveField {
        match self.model.receptive_field() {
            ReceptiveField::Radius(r) => ReceptiveField::Radius(r.div_ceil(self.codec.factor())),
            ReceptiveField::Unbounded => ReceptiveField::Unbounded,
        }
    }

    fn task(&self) -> Task {
        self.model.task()
    }

    fn bind<'a>(&'a self, cond: &Condition, shape: Shape) -> Result<Box<dyn BoundDenoiser + 'a>> {
        Ok(Box::new(self.prior(cond, shape)?))
    }
}
