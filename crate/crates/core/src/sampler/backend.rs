//! Denoiser contract.
//!
//! A backend predicts the noise component of a noisy state given the
//! condition set. Binding happens once per sampling run (conditioning is
//! encoded once); the bound predictor is then queried at every timestep.

use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::noise::NoiseField;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceptiveField {
    /// Output pixel `q` depends only on inputs within Chebyshev distance `r` of `q`.
    Radius(usize),
    Unbounded,
}

impl ReceptiveField {
    pub fn radius(&self) -> Option<usize> {
        match self {
            ReceptiveField::Radius(r) => Some(*r),
            ReceptiveField::Unbounded => None,
        }
    }
}

/// What a backend was built to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Image refinement conditioned on a lower-resolution raster.
    Refine,
    /// Height prediction conditioned on orthographic imagery.
    Height,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Shape { width, height, channels }
    }

    pub fn of(r: &RasterGrid) -> Self {
        Shape { width: r.width(), height: r.height(), channels: r.channels() }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Condition set handed to a backend for one sampling run.
#[derive(Clone)]
pub struct Condition {
    /// Conditioning raster, spatially aligned with the sample.
    pub raster: Option<RasterGrid>,
    /// Target ground sample distance of the sample (m/pixel).
    pub target_gsd: Option<f64>,
    pub resolution_embedding: Vec<f64>,
    pub prompt: Option<String>,
    pub view_index: Option<usize>,
    /// World pixel index of the sample's pixel (0, 0).
    pub origin_px: [i64; 2],
    /// Scale level, used to separate noise streams between levels.
    pub level: u32,
    /// World-anchored noise the backend may read for detail synthesis.
    pub noise: NoiseField,
}

impl Condition {
    pub fn new(noise: NoiseField) -> Self {
        Condition {
            raster: None,
            target_gsd: None,
            resolution_embedding: Vec::new(),
            prompt: None,
            view_index: None,
            origin_px: [0, 0],
            level: 0,
            noise,
        }
    }

    pub fn with_raster(mut self, r: RasterGrid) -> Self {
        self.raster = Some(r);
        self
    }

    pub fn with_origin(mut self, origin_px: [i64; 2]) -> Self {
        self.origin_px = origin_px;
        self
    }

    pub fn require_raster(&self, shape: Shape, channels: Option<usize>) -> Result<&RasterGrid> {
        let r = self.raster.as_ref().ok_or_else(|| Error::Contract("backend needs a conditioning raster".into()))?;
        if r.width() != shape.width || r.height() != shape.height {
            return Err(Error::Contract(format!(
                "conditioning raster {}x{} does not match sample {}x{}",
                r.width(),
                r.height(),
                shape.width,
                shape.height
            )));
        }
        if let Some(c) = channels {
            if r.channels() != c {
                return Err(Error::Contract(format!("conditioning raster has {} channels, need {c}", r.channels())));
            }
        }
        Ok(r)
    }
}

impl fmt::Debug for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Condition")
            .field("raster", &self.raster.as_ref().map(Shape::of))
            .field("target_gsd", &self.target_gsd)
            .field("prompt", &self.prompt)
            .field("view_index", &self.view_index)
            .field("origin_px", &self.origin_px)
            .field("level", &self.level)
            .finish()
    }
}

pub trait BoundDenoiser: Send + Sync {
    /// Predicted noise for state `x_t` (interleaved, same layout as the sample).
    fn predict(&self, x_t: &[f64], t: usize, alpha_bar: f64) -> Result<Vec<f64>>;
}

pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;
    fn receptive_field(&self) -> ReceptiveField;
    fn task(&self) -> Task {
        Task::Refine
    }
    fn bind<'a>(&'a self, cond: &Condition, shape: Shape) -> Result<Box<dyn BoundDenoiser + 'a>>;
}

/// Per-element Gaussian data prior `x0 ~ N(mean, var)`. Its optimal noise
/// prediction is closed form:
/// `eps = sqrt(1 - a) (x_t - sqrt(a) mean) / (a var + 1 - a)` with `a = alpha_bar_t`.
/// `var = 0` is the point-mass case.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Contract("prior mean/variance length mismatch".into()));
        }
        if var.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Contract("prior variance must be non-negative".into()));
        }
        Ok(GaussianPrior { mean, var })
    }

    pub fn uniform_var(mean: Vec<f64>, var: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![var; n])
    }

    pub fn epsilon(&self, x_t: &[f64], alpha_bar: f64) -> Result<Vec<f64>> {
        if x_t.len() != self.mean.len() {
            return Err(Error::Contract(format!("state length {} != prior length {}", x_t.len(), self.mean.len())));
        }
        let sa = alpha_bar.sqrt();
        let s1 = (1.0 - alpha_bar).sqrt();
        let mut out = Vec::with_capacity(x_t.len());
        for ((x, m), v) in x_t.iter().zip(&self.mean).zip(&self.var) {
            let denom = alpha_bar * v + 1.0 - alpha_bar;
            if !(denom > 0.0) {
                return Err(Error::Domain("degenerate posterior (alpha_bar = 1 with zero variance)".into()));
            }
            out.push(s1 * (x - sa * m) / denom);
        }
        Ok(out)
    }
}

impl BoundDenoiser for GaussianPrior {
    fn predict(&self, x_t: &[f64], _t: usize, alpha_bar: f64) -> Result<Vec<f64>> {
        self.epsilon(x_t, alpha_bar)
    }
}

/// Backends that reduce to a per-element Gaussian prior computed once from
/// the condition set.
pub trait PriorModel: Send + Sync {
    fn prior(&self, cond: &Condition, shape: Shape) -> Result<GaussianPrior>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanSource {
    /// Fixed clean sample `x0*`.
    Fixed(Vec<f64>),
    /// Mean taken from the conditioning raster (must match the sample's channels).
    Condition,
    /// Constant mean everywhere.
    Constant(f64),
}

/// Closed-form denoiser for a Gaussian (or point-mass when `variance = 0`)
/// data distribution; pointwise, so its receptive field is 0.
#[derive(Debug, Clone)]
pub struct AnalyticDenoiser {
    pub mean: MeanSource,
    pub variance: f64,
}

impl AnalyticDenoiser {
    pub fn point_mass(x0: Vec<f64>) -> Self {
        AnalyticDenoiser { mean: MeanSource::Fixed(x0), variance: 0.0 }
    }

    /// `x0_hat` equals the conditioning raster at every step.
    pub fn follow_condition() -> Self {
        AnalyticDenoiser { mean: MeanSource::Condition, variance: 0.0 }
    }

    pub fn constant(mean: f64, variance: f64) -> Self {
        AnalyticDenoiser { mean: MeanSource::Constant(mean), variance }
    }
}

impl PriorModel for AnalyticDenoiser {
    fn prior(&self, cond: &Condition, shape: Shape) -> Result<GaussianPrior> {
        let mean = match &self.mean {
            MeanSource::Fixed(x0) => {
                if x0.len() != shape.len() {
                    return Err(Error::Contract(format!("x0* length {} != sample length {}", x0.len(), shape.len())));
                }
                x0.clone()
            }
            MeanSource::Condition => cond.require_raster(shape, Some(shape.channels))?.data().to_vec(),
            MeanSource::Constant(m) => vec![*m; shape.len()],
        };
        GaussianPrior::uniform_var(mean, self.variance)
    }
}

impl Denoiser for AnalyticDenoiser {
    fn name(&self) -> &str {
        "analytic"
    }

    fn receptive_field(&self) -> ReceptiveField {
        ReceptiveField::Radius(0)
    }

    fn bind<'a>(&'a self, cond: &Condition, shape: Shape) -> Result<Box<dyn BoundDenoiser + 'a>> {
        Ok(Box::new(self.prior(cond, shape)?))
    }
}
