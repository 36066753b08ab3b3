//! Sliding-window generation over arbitrarily large extents.
//!
//! Windows overlap by half their size. Every window reads its initial noise
//! from the world-anchored [`NoiseField`] at its own world pixel coordinates,
//! so overlapping windows start from identical noise. With a backend whose
//! receptive radius is at most a quarter window, each output pixel owned by a
//! window under center-crop merging is the same value any other covering
//! window would produce, and the merged raster does not depend on where the
//! extent starts.

use crate::error::{Error, Result};
use crate::grid::{PixelRect, RasterGrid};
use crate::noise::{hash_words, NoiseField};
use crate::sampler::{sample, Condition, Denoiser, LatentCodec, NoiseSchedule, SamplerKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_WINDOW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// Pixel offset of the window inside the extent.
    pub origin: [i64; 2],
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub extent: [usize; 2],
    pub window: usize,
    pub stride: usize,
    /// Window origins along x and y; the plan is their cross product.
    pub xs: Vec<i64>,
    pub ys: Vec<i64>,
}

fn axis_origins(extent: usize, window: usize, stride: usize) -> Vec<i64> {
    if extent <= window {
        return vec![0];
    }
    let last = (extent - window) as i64;
    let mut xs: Vec<i64> = (0..).map(|k| k * stride as i64).take_while(|x| *x < last).collect();
    xs.push(last);
    xs
}

/// Interior boundaries between consecutive windows: pixels before the
/// boundary belong to the earlier window. Each sits at the overlap midpoint.
fn axis_boundaries(origins: &[i64], window: usize) -> Vec<i64> {
    origins.windows(2).map(|w| (w[1] + w[0] + window as i64) / 2).collect()
}

pub fn plan_windows(extent: [usize; 2], window: usize) -> Result<WindowPlan> {
    if extent[0] == 0 || extent[1] == 0 {
        return Err(Error::Plan("zero extent".into()));
    }
    if window == 0 || window % 2 != 0 {
        return Err(Error::Plan(format!("window size must be even and positive, got {window}")));
    }
    let stride = window / 2;
    Ok(WindowPlan {
        extent,
        window,
        stride,
        xs: axis_origins(extent[0], window, stride),
        ys: axis_origins(extent[1], window, stride),
    })
}

impl WindowPlan {
    pub fn windows(&self) -> Vec<Window> {
        self.ys.iter().flat_map(|&y| self.xs.iter().map(move |&x| Window { origin: [x, y], size: self.window })).collect()
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns where a vertical seam lies between pixel `x - 1` and `x`.
    pub fn seam_columns(&self) -> Vec<i64> {
        axis_boundaries(&self.xs, self.window)
    }

    /// Rows where a horizontal seam lies between pixel row `y - 1` and `y`.
    pub fn seam_rows(&self) -> Vec<i64> {
        axis_boundaries(&self.ys, self.window)
    }

    /// Number of windows covering each pixel.
    pub fn coverage(&self) -> Vec<usize> {
        let [w, h] = self.extent;
        let mut cov = vec![0usize; w * h];
        for win in self.windows() {
            for y in win.origin[1].max(0)..(win.origin[1] + win.size as i64).min(h as i64) {
                for x in win.origin[0].max(0)..(win.origin[0] + win.size as i64).min(w as i64) {
                    cov[y as usize * w + x as usize] += 1;
                }
            }
        }
        cov
    }

    /// Index ranges `[lo, hi)` owned by each window along one axis.
    fn owned(origins: &[i64], window: usize, extent: usize) -> Vec<(i64, i64)> {
        let b = axis_boundaries(origins, window);
        (0..origins.len())
            .map(|k| {
                let lo = if k == 0 { 0 } else { b[k - 1] };
                let hi = if k + 1 == origins.len() { extent as i64 } else { b[k] };
                (lo, hi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MergeMode {
    /// Each pixel comes from the window whose center region owns it.
    CenterCrop,
    /// Tent-weighted running mean over all covering windows.
    Feather,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NoiseMode {
    /// One world-anchored field shared by all windows.
    Shared,
    /// Every window gets its own field (ablation baseline).
    Independent,
}

#[derive(Debug, Clone)]
pub struct TileOptions {
    pub window: usize,
    pub merge: MergeMode,
    pub noise: NoiseMode,
    pub sampler: SamplerKind,
}

impl Default for TileOptions {
    fn default() -> Self {
        TileOptions {
            window: DEFAULT_WINDOW,
            merge: MergeMode::CenterCrop,
            noise: NoiseMode::Shared,
            sampler: SamplerKind::Ddim,
        }
    }
}

fn window_field(noise: &NoiseField, mode: NoiseMode, world: [i64; 2]) -> NoiseField {
    match mode {
        NoiseMode::Shared => *noise,
        NoiseMode::Independent => noise.fork(hash_words(0x77696e, &[world[0] as u64, world[1] as u64])),
    }
}

fn check_options(opts: &TileOptions) -> Result<()> {
    if opts.sampler != SamplerKind::Ddim {
        return Err(Error::Contract(
            "tiled generation needs the deterministic sampler; overlap consistency does not hold for ancestral sampling"
                .into(),
        ));
    }
    Ok(())
}

/// Merges per-window outputs (each `window x window`, in plan order) into a
/// raster with the geometry of `like` (extent, gsd, anchor).
pub fn merge_windows(plan: &WindowPlan, outputs: &[RasterGrid], like: &RasterGrid, mode: MergeMode) -> Result<RasterGrid> {
    let windows = plan.windows();
    if outputs.len() != windows.len() {
        return Err(Error::Contract("one output per window required".into()));
    }
    let channels = outputs.first().map_or(like.channels(), |o| o.channels());
    let [w, h] = plan.extent;
    let mut out = RasterGrid::zeros(w, h, channels, like.gsd(), like.anchor())?;
    match mode {
        MergeMode::CenterCrop => {
            let ox = WindowPlan::owned(&plan.xs, plan.window, w);
            let oy = WindowPlan::owned(&plan.ys, plan.window, h);
            for (iy, &(y0, y1)) in oy.iter().enumerate() {
                for (ix, &(x0, x1)) in ox.iter().enumerate() {
                    let win = &windows[iy * plan.xs.len() + ix];
                    let src = &outputs[iy * plan.xs.len() + ix];
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let (sx, sy) = ((x - win.origin[0]) as usize, (y - win.origin[1]) as usize);
                            out.pixel_mut(x as usize, y as usize).copy_from_slice(src.pixel(sx, sy));
                        }
                    }
                }
            }
        }
        MergeMode::Feather => {
            let tent = |i: usize| {
                let i = i as f64 + 0.5;
                i.min(plan.window as f64 - i)
            };
            let mut weight = vec![0.0; w * h];
            for (win, src) in windows.iter().zip(outputs) {
                for sy in 0..plan.window {
                    let y = win.origin[1] + sy as i64;
                    if y >= h as i64 {
                        break;
                    }
                    for sx in 0..plan.window {
                        let x = win.origin[0] + sx as i64;
                        if x >= w as i64 {
                            break;
                        }
                        let wt = tent(sx) * tent(sy);
                        let k = y as usize * w + x as usize;
                        weight[k] += wt;
                        let frac = wt / weight[k];
                        let dst = out.pixel_mut(x as usize, y as usize);
                        for (d, v) in dst.iter_mut().zip(src.pixel(sx, sy)) {
                            *d += frac * (v - *d);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Tiled pixel-space generation conditioned on `cond` (which also fixes the
/// output extent, gsd and world placement). `template` supplies the
/// non-spatial condition fields (resolution embedding, prompt, level).
pub fn generate_unbounded(
    cond: &RasterGrid,
    template: &Condition,
    backend: &dyn Denoiser,
    steps: &[usize],
    sched: &NoiseSchedule,
    opts: &TileOptions,
) -> Result<RasterGrid> {
    check_options(opts)?;
    let plan = plan_windows([cond.width(), cond.height()], opts.window)?;
    let world = cond.world_origin_px();
    let t0 = steps.first().copied().unwrap_or(0) as u32;
    let outputs: Vec<RasterGrid> = plan
        .windows()
        .par_iter()
        .map(|win| {
            let crop = cond.crop_clamped(PixelRect::new(win.origin[0], win.origin[1], win.size, win.size));
            let wo = [world[0] + win.origin[0], world[1] + win.origin[1]];
            let field = window_field(&template.noise, opts.noise, wo);
            let init = crop.with_data(crop.channels(), field.fill(template.level, t0, wo, win.size, win.size, crop.channels()))?;
            let mut c = template.clone().with_raster(crop).with_origin(wo);
            c.noise = field;
            sample(backend, &c, &init, steps, sched)
        })
        .collect::<Result<_>>()?;
    merge_windows(&plan, &outputs, cond, opts.merge)
}

/// Tiled generation in a codec's latent space. Windows are cropped from `cond`
/// in pixel space, sampled as latents with noise at world latent coordinates
/// (world pixel / f), decoded and merged in pixel space. The backend works on
/// latents and receives the pixel-space crop as its condition raster.
pub fn generate_unbounded_latent(
    cond: &RasterGrid,
    template: &Condition,
    codec: &dyn LatentCodec,
    backend: &dyn Denoiser,
    steps: &[usize],
    sched: &NoiseSchedule,
    opts: &TileOptions,
) -> Result<RasterGrid> {
    check_options(opts)?;
    if !codec.is_block_local() {
        return Err(Error::Contract("latent tiling needs a block-local codec".into()));
    }
    let f = codec.factor();
    if opts.window % (2 * f) != 0 {
        return Err(Error::Contract(format!("window {} must be a multiple of 2f = {}", opts.window, 2 * f)));
    }
    let world = cond.world_origin_px();
    if world[0].rem_euclid(f as i64) != 0 || world[1].rem_euclid(f as i64) != 0 {
        return Err(Error::Contract(format!("extent origin {world:?} not aligned to codec blocks of {f}")));
    }
    // Pad to whole blocks so every window origin stays block aligned.
    let pw = cond.width().div_ceil(f) * f;
    let ph = cond.height().div_ceil(f) * f;
    let padded = cond.crop_clamped(PixelRect::new(0, 0, pw, ph));
    let plan = plan_windows([pw, ph], opts.window)?;
    let t0 = steps.first().copied().unwrap_or(0) as u32;
    let lsize = opts.window / f;
    let lch = codec.latent_channels(cond.channels());
    let outputs: Vec<RasterGrid> = plan
        .windows()
        .par_iter()
        .map(|win| {
            let crop = padded.crop_clamped(PixelRect::new(win.origin[0], win.origin[1], win.size, win.size));
            let wo = [world[0] + win.origin[0], world[1] + win.origin[1]];
            let lo = [wo[0] / f as i64, wo[1] / f as i64];
            let field = window_field(&template.noise, opts.noise, wo);
            let noise = field.fill(template.level, t0, lo, lsize, lsize, lch);
            let init = RasterGrid::from_data(
                lsize,
                lsize,
                lch,
                crop.gsd() * f as f64,
                RasterGrid::anchor_for(lo, crop.gsd() * f as f64),
                noise,
            )?;
            let mut c = template.clone().with_raster(crop).with_origin(wo);
            c.noise = field;
            let z = sample(backend, &c, &init, steps, sched)?;
            codec.decode(&z, cond.channels())
        })
        .collect::<Result<_>>()?;
    let merged = merge_windows(&plan, &outputs, &padded, opts.merge)?;
    Ok(merged.crop_clamped(PixelRect::new(0, 0, cond.width(), cond.height())))
}

/// Tiled output manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TileManifest {
    pub window_px: usize,
    pub stride: usize,
    pub merge_mode: MergeMode,
    pub seed: u64,
    pub tiles: Vec<TileEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileEntry {
    pub origin: [i64; 2],
    pub file: String,
}
