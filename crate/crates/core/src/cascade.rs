//! Coarse-to-fine refinement through a resolution ladder.
//!
//! Level `i + 1` is sampled from level `i` alone: the orchestrator only ever
//! hands the backend the previous level, upsampled, plus the target gsd.

use crate::encoding::resolution_embedding;
use crate::error::{Error, Result};
use crate::grid::{PixelRect, RasterGrid};
use crate::noise::NoiseField;
use crate::sampler::{Condition, Denoiser, NoiseSchedule};
use crate::tiler::{generate_unbounded, TileOptions};
use serde::{Deserialize, Serialize};

pub const EMBEDDING_DIM: usize = 16;
const GSD_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    /// Ground sample distances in m/pixel, coarsest first.
    pub levels: Vec<f64>,
    pub factor: usize,
    pub patch: usize,
}

impl Default for ScaleLadder {
    fn default() -> Self {
        ScaleLadder { levels: vec![64.0, 16.0, 4.0, 1.0], factor: 4, patch: 256 }
    }
}

fn ratio_ok(coarse: f64, fine: f64, factor: usize) -> bool {
    (coarse / fine - factor as f64).abs() <= GSD_RTOL * factor as f64
}

impl ScaleLadder {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Ladder("ladder needs at least one level".into()));
        }
        if self.factor < 2 {
            return Err(Error::Ladder(format!("factor must be at least 2, got {}", self.factor)));
        }
        if let Some(g) = self.levels.iter().find(|g| !(**g > 0.0)) {
            return Err(Error::Ladder(format!("gsd must be positive, got {g}")));
        }
        for w in self.levels.windows(2) {
            if !ratio_ok(w[0], w[1], self.factor) {
                return Err(Error::Ladder(format!("gsd {} -> {} is not a factor of {}", w[0], w[1], self.factor)));
            }
        }
        Ok(())
    }
}

/// Upsampled low-resolution raster plus the side information of the
/// condition set.
#[derive(Debug, Clone)]
pub struct ConditionSet {
    pub raster: RasterGrid,
    pub target_gsd: f64,
    pub embedding: Vec<f64>,
    pub prompt: Option<String>,
}

/// Bilinear ×`factor` upsampling of `low` (optionally restricted to `region`,
/// in world pixels at the target gsd) with the resolution embedding attached.
pub fn assemble_condition(
    low: &RasterGrid,
    target_gsd: f64,
    factor: usize,
    region: Option<PixelRect>,
) -> Result<ConditionSet> {
    if !ratio_ok(low.gsd(), target_gsd, factor) {
        return Err(Error::Ladder(format!(
            "condition gsd {} is not {factor} x target gsd {target_gsd}",
            low.gsd()
        )));
    }
    let raster = match region {
        Some(r) => low.upsample_region(factor, r)?,
        None => low.upsample(factor)?,
    };
    Ok(ConditionSet { raster, target_gsd, embedding: resolution_embedding(target_gsd, EMBEDDING_DIM)?, prompt: None })
}

#[derive(Debug, Clone)]
pub struct CascadeOptions {
    pub tile: TileOptions,
    /// Levels whose full extent exceeds this many pixels per side are
    /// materialized as a centered crop of this size.
    pub crop_limit: usize,
    pub steps: Vec<usize>,
}

/// One refinement `x_i -> x_{i+1}` at noise level index `level`.
#[allow(clippy::too_many_arguments)]
pub fn refine_once(
    x: &RasterGrid,
    target_gsd: f64,
    factor: usize,
    region: Option<PixelRect>,
    level: u32,
    backend: &dyn Denoiser,
    noise: &NoiseField,
    sched: &NoiseSchedule,
    opts: &CascadeOptions,
) -> Result<RasterGrid> {
    let cs = assemble_condition(x, target_gsd, factor, region)?;
    let mut tpl = Condition::new(*noise);
    tpl.target_gsd = Some(cs.target_gsd);
    tpl.resolution_embedding = cs.embedding;
    tpl.prompt = cs.prompt;
    tpl.level = level;
    generate_unbounded(&cs.raster, &tpl, backend, &opts.steps, sched, &opts.tile)
}

/// Region of the next level to materialize: everything if it fits the crop
/// limit, otherwise a centered `crop_limit` square aligned to 32 pixels.
pub fn next_region(prev: &RasterGrid, logical: [i64; 2], logical_size: usize, factor: usize, limit: usize) -> Option<PixelRect> {
    let full = logical_size * factor;
    if full <= limit && prev.width() * factor == full && prev.height() * factor == full {
        return None;
    }
    let size = limit.min(full);
    let off = (((full - size) / 2) / 32 * 32) as i64;
    Some(PixelRect::new(logical[0] * factor as i64 + off, logical[1] * factor as i64 + off, size, size))
}

/// Runs the full ladder from `anchor`. Returns one raster per level; levels
/// larger than the crop limit hold a centered crop (the logical extent is
/// `patch * factor^k`).
pub fn run_cascade(
    anchor: &RasterGrid,
    ladder: &ScaleLadder,
    backend: &dyn Denoiser,
    seed: u64,
    sched: &NoiseSchedule,
    opts: &CascadeOptions,
) -> Result<Vec<RasterGrid>> {
    ladder.validate()?;
    if !((anchor.gsd() - ladder.levels[0]).abs() <= GSD_RTOL * ladder.levels[0]) {
        return Err(Error::Ladder(format!("anchor gsd {} does not match ladder start {}", anchor.gsd(), ladder.levels[0])));
    }
    let noise = NoiseField::new(seed);
    let mut logical = anchor.world_origin_px();
    let mut logical_size = anchor.width().max(anchor.height());
    let mut out = vec![anchor.clone()];
    for (k, &gsd) in ladder.levels.iter().enumerate().skip(1) {
        let prev = out.last().expect("anchor present");
        let region = next_region(prev, logical, logical_size, ladder.factor, opts.crop_limit);
        let next = refine_once(prev, gsd, ladder.factor, region, k as u32, backend, &noise, sched, opts)?;
        logical = [logical[0] * ladder.factor as i64, logical[1] * ladder.factor as i64];
        logical_size *= ladder.factor;
        out.push(next);
    }
    Ok(out)
}

/// Pearson correlation of two equally sized value lists.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Correlation between the ×`factor` box-downsample of `fine` and the part of
/// `coarse` it covers.
pub fn anchoring_correlation(coarse: &RasterGrid, fine: &RasterGrid, factor: usize) -> Result<f64> {
    let down = fine.box_downsample(factor)?;
    let fo = down.world_origin_px();
    let co = coarse.world_origin_px();
    let sub = coarse.crop_clamped(PixelRect::new(fo[0] - co[0], fo[1] - co[1], down.width(), down.height()));
    if fo[0] < co[0] || fo[1] < co[1] || fo[0] - co[0] + down.width() as i64 > coarse.width() as i64 {
        return Err(Error::Contract("fine level not inside the coarse level".into()));
    }
    Ok(pearson(down.data(), sub.data()))
}
