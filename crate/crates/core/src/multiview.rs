//! Multi-view lateral texture inpainting.
//!
//! Views around a circular trajectory are rendered from the coarse mesh; the
//! lateral mask marks pixels whose front-most face is a wall. All views are
//! then sampled jointly in latent space: each view's input stacks its noisy
//! latent, its encoded render and its latent mask, the backend exchanges
//! information between circular neighbors through local attention, and the
//! known (unmasked) latent content is re-imposed after every step.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::RasterGrid;
use crate::noise::{stream, NoiseField};
use crate::render::CameraView;
use crate::sampler::steps::ddim_update;
use crate::sampler::{validate_step_list, LatentCodec, NoiseSchedule};
use rayon::prelude::*;

/// Row-major token matrix (`rows x width`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tokens {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tokens {
    pub fn new(rows: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * width {
            return Err(Error::Contract(format!("token data length {} != {rows}x{width}", data.len())));
        }
        Ok(Tokens { rows, width, data })
    }

    pub fn zeros(rows: usize, width: usize) -> Self {
        Tokens { rows, width, data: vec![0.0; rows * width] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Per-view embedding vectors `e^(i)`, seeded rather than learned.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddingTable {
    pub width: usize,
    pub rows: Vec<Vec<f64>>,
}

impl ViewEmbeddingTable {
    pub fn seeded(views: usize, width: usize, seed: u64, scale: f64) -> Self {
        let f = NoiseField::new(seed).fork(stream::EMBEDDING as u64);
        let rows = (0..views)
            .map(|i| (0..width).map(|c| scale * f.draw(0, stream::EMBEDDING, i as i64, 0, c as u32)).collect())
            .collect();
        ViewEmbeddingTable { width, rows }
    }

    pub fn zeros(views: usize, width: usize) -> Self {
        ViewEmbeddingTable { width, rows: vec![vec![0.0; width]; views] }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rotated copy: row `i` of the result is row `i - shift (mod N)` of self.
    pub fn rotated(&self, shift: usize) -> Self {
        let n = self.rows.len();
        ViewEmbeddingTable { width: self.width, rows: (0..n).map(|i| self.rows[(i + n - shift % n) % n].clone()).collect() }
    }
}

/// Adds `e^(i)` to every token of `features`.
pub fn inject_view_embedding(features: &Tokens, i: usize, table: &ViewEmbeddingTable) -> Result<Tokens> {
    if features.width != table.width {
        return Err(Error::Contract(format!("feature width {} != embedding width {}", features.width, table.width)));
    }
    let e = table.rows.get(i).ok_or_else(|| Error::Contract(format!("no embedding for view {i}")))?;
    let mut out = features.clone();
    for r in out.data.chunks_mut(features.width) {
        for (v, ev) in r.iter_mut().zip(e) {
            *v += ev;
        }
    }
    Ok(out)
}

/// Views attended by view `i`: offsets `-radius..=radius` around the ring.
/// When that covers every view the plain order `0..N` is used, which makes
/// the result identical to unmasked global attention.
pub fn neighborhood(i: usize, n: usize, radius: usize) -> Vec<usize> {
    if 2 * radius + 1 >= n {
        return (0..n).collect();
    }
    (0..=2 * radius).map(|k| (i + n + k - radius) % n).collect()
}

/// One softmax attention row: `softmax(q . k_j / sqrt(d)) V`.
pub fn attend_row(q: &[f64], keys: &[&Tokens], values: &[&Tokens], out: &mut [f64]) {
    let d = q.len() as f64;
    let scale = 1.0 / d.sqrt();
    let mut scores = Vec::with_capacity(keys.iter().map(|k| k.rows).sum());
    for k in keys {
        for j in 0..k.rows {
            let s: f64 = q.iter().zip(k.row(j)).map(|(a, b)| a * b).sum();
            scores.push(s * scale);
        }
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut total = 0.0;
    let mut idx = 0;
    for v in values {
        for j in 0..v.rows {
            let w = (scores[idx] - m).exp();
            idx += 1;
            total += w;
            for (o, x) in out.iter_mut().zip(v.row(j)) {
                *o += w * x;
            }
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Cross-view local attention: queries of view `i` attend to the keys and
/// values of views `i - radius ..= i + radius` (circular).
pub fn cross_view_local_attention(q: &[Tokens], k: &[Tokens], v: &[Tokens], radius: usize) -> Result<Vec<Tokens>> {
    let n = q.len();
    if n == 0 {
        return Err(Error::Contract("attention needs at least one view".into()));
    }
    if k.len() != n || v.len() != n {
        return Err(Error::Contract("query, key and value lists must have one entry per view".into()));
    }
    let d = q[0].width;
    if d == 0 {
        return Err(Error::Contract("attention width must be positive".into()));
    }
    let vw = v[0].width;
    for i in 0..n {
        if q[i].width != d || k[i].width != d || v[i].width != vw || k[i].rows != v[i].rows {
            return Err(Error::Contract(format!("view {i} has inconsistent token shapes")));
        }
        if q[i].rows != q[0].rows {
            return Err(Error::Contract("all views need the same token count".into()));
        }
    }
    Ok(local_attention_unchecked(q, k, v, radius))
}

fn local_attention_unchecked(q: &[Tokens], k: &[Tokens], v: &[Tokens], radius: usize) -> Vec<Tokens> {
    let n = q.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let nb = neighborhood(i, n, radius);
            let keys: Vec<&Tokens> = nb.iter().map(|&j| &k[j]).collect();
            let vals: Vec<&Tokens> = nb.iter().map(|&j| &v[j]).collect();
            let vw = v[i].width;
            let mut out = Tokens::zeros(q[i].rows, vw);
            out.data.par_chunks_mut(vw.max(1)).enumerate().for_each(|(r, o)| attend_row(q[i].row(r), &keys, &vals, o));
            out
        })
        .collect()
}

/// Rendered views to inpaint; all share intrinsics.
#[derive(Debug, Clone)]
pub struct MultiViewBatch {
    pub views: Vec<CameraView>,
}

impl MultiViewBatch {
    pub fn new(views: Vec<CameraView>) -> Result<Self> {
        if let Some(first) = views.first() {
            if views.iter().any(|v| v.camera.k != first.camera.k) {
                return Err(Error::Contract("all views must share intrinsics".into()));
            }
        }
        Ok(MultiViewBatch { views })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Latent mask: a latent pixel is masked if any pixel of its block is.
pub fn latent_mask(mask: &RasterGrid, f: usize) -> Result<RasterGrid> {
    if mask.width() % f != 0 || mask.height() % f != 0 {
        return Err(Error::Contract("mask size must be divisible by the codec factor".into()));
    }
    let (w, h) = (mask.width() / f, mask.height() / f);
    let mut d = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let any = (0..f).any(|dy| (0..f).any(|dx| mask.get(x * f + dx, y * f + dy, 0) > 0.5));
            d[y * w + x] = if any { 1.0 } else { 0.0 };
        }
    }
    RasterGrid::image(w, h, 1, d)
}

/// Stacked backend input `Concat[z_t, E(v), m]` with `2C + 1` channels.
pub fn stack_input(z_t: &RasterGrid, encoded: &RasterGrid, mask: &RasterGrid) -> Result<RasterGrid> {
    RasterGrid::concat_channels(&[z_t, encoded, mask])
}

pub trait BoundMultiView: Send + Sync {
    /// Noise predictions for all views from their stacked inputs.
    fn predict(&self, inputs: &[RasterGrid], t: usize, alpha_bar: f64) -> Result<Vec<Vec<f64>>>;
}

pub trait MultiViewDenoiser: Send + Sync {
    fn name(&self) -> &str;
    fn cross_view(&self) -> bool;
    fn bind<'a>(
        &'a self,
        batch: &MultiViewBatch,
        table: &ViewEmbeddingTable,
        codec: &dyn LatentCodec,
        noise: &NoiseField,
    ) -> Result<Box<dyn BoundMultiView + 'a>>;
}

/// Unprojects pixel `(x, y)` at camera depth `z` to world space.
pub fn unproject(cam: &Camera, x: f64, y: f64, z: f64) -> Vec3 {
    let c = Vec3::new((x - cam.k.cx) / cam.k.fx * z, (y - cam.k.cy) / cam.k.fy * z, z);
    cam.rotation().transpose() * (c - cam.translation())
}

/// World-anchored facade color: a smooth base tint plus soft floor banding.
pub fn facade_color(noise: &NoiseField, p: &Vec3) -> [f64; 3] {
    let band = (std::f64::consts::TAU * p.z / 3.5).sin();
    let mut c = [0.58, 0.54, 0.50];
    for (k, v) in c.iter_mut().enumerate() {
        let n = noise.value_noise(0, stream::FACADE, p.x + 0.31 * p.z, p.y - 0.17 * p.z, 9.0, k as u32);
        *v = (*v + 0.08 * n + 0.05 * band).clamp(0.0, 1.0);
    }
    c
}

/// Procedural facade backend. Every masked pixel is unprojected to its
/// world point; a query attends over sampled wall points of the neighboring
/// views with logits `-|P - P'|² / 2σ²` (plus the view-embedding term), and
/// the attended facade colors form the clean-image prior. Known pixels keep
/// their input color. The prior is encoded once and treated as a point mass.
#[derive(Debug, Clone)]
pub struct FacadeBackend {
    /// Pixel stride when sampling key points in neighboring views.
    pub key_stride: usize,
    /// Attention kernel width in key spacings.
    pub sigma_scale: f64,
    pub radius: usize,
}

impl Default for FacadeBackend {
    fn default() -> Self {
        FacadeBackend { key_stride: 3, sigma_scale: 1.0, radius: 1 }
    }
}

struct WallPoints {
    /// (pixel index, world point) of every masked pixel with finite depth.
    pixels: Vec<(usize, Vec3)>,
    keys: Vec<Vec3>,
}

fn wall_points(view: &CameraView, stride: usize) -> WallPoints {
    let (w, h) = (view.rgb.width(), view.rgb.height());
    let mut pixels = Vec::new();
    let mut keys = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let d = view.depth.get(x, y, 0);
            if view.lateral_mask.get(x, y, 0) > 0.5 && d.is_finite() {
                let p = unproject(&view.camera, x as f64, y as f64, d);
                pixels.push((y * w + x, p));
                if x % stride == 0 && y % stride == 0 {
                    keys.push(p);
                }
            }
        }
    }
    WallPoints { pixels, keys }
}

struct BoundFacade {
    means: Vec<Vec<f64>>,
    channels: usize,
}

impl BoundMultiView for BoundFacade {
    fn predict(&self, inputs: &[RasterGrid], _t: usize, alpha_bar: f64) -> Result<Vec<Vec<f64>>> {
        if inputs.len() != self.means.len() {
            return Err(Error::Contract("one input per view required".into()));
        }
        let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
        if !(sn > 0.0) {
            return Err(Error::Domain("alpha_bar = 1 leaves no noise to predict".into()));
        }
        inputs
            .iter()
            .zip(&self.means)
            .map(|(u, mu)| {
                let c = self.channels;
                if u.channels() != 2 * c + 1 {
                    return Err(Error::Contract(format!("stacked input has {} channels, expected {}", u.channels(), 2 * c + 1)));
                }
                Ok(u.data()
                    .chunks(u.channels())
                    .zip(mu.chunks(c))
                    .flat_map(|(px, m)| px[..c].iter().zip(m).map(|(z, m)| (z - sa * m) / sn).collect::<Vec<_>>())
                    .collect())
            })
            .collect()
    }
}

impl MultiViewDenoiser for FacadeBackend {
    fn name(&self) -> &str {
        "facade"
    }

    fn cross_view(&self) -> bool {
        true
    }

    fn bind<'a>(
        &'a self,
        batch: &MultiViewBatch,
        table: &ViewEmbeddingTable,
        codec: &dyn LatentCodec,
        noise: &NoiseField,
    ) -> Result<Box<dyn BoundMultiView + 'a>> {
        let n = batch.len();
        if table.len() != n {
            return Err(Error::Contract(format!("embedding table has {} rows for {n} views", table.len())));
        }
        let stride = self.key_stride.max(1);
        let walls: Vec<WallPoints> = batch.views.par_iter().map(|v| wall_points(v, stride)).collect();
        // Center coordinates to keep the expanded squared distance well conditioned.
        let all: Vec<&Vec3> = walls.iter().flat_map(|w| w.pixels.iter().map(|p| &p.1)).collect();
        let center = if all.is_empty() { Vec3::zeros() } else { all.iter().fold(Vec3::zeros(), |a, p| a + *p) / all.len() as f64 };
        // Kernel width from the typical key spacing: stride x pixel footprint.
        let mut foot: Vec<f64> = batch
            .views
            .iter()
            .flat_map(|v| {
                let fx = v.camera.k.fx;
                v.depth.data().iter().zip(v.lateral_mask.data()).filter(|(d, m)| d.is_finite() && **m > 0.5).map(move |(d, _)| d / fx)
            })
            .collect();
        foot.sort_by(|a, b| a.total_cmp(b));
        let footprint = foot.get(foot.len() / 2).copied().unwrap_or(1.0);
        let sigma = self.sigma_scale * stride as f64 * footprint;
        let e = table.width;
        let d = 5 + e;
        let sd = (d as f64).sqrt();
        let query_tokens = |ws: &WallPoints, i: usize| -> Result<Tokens> {
            let mut geo = Tokens::zeros(ws.pixels.len(), d);
            for (r, (_, p)) in ws.pixels.iter().enumerate() {
                let q = (p - center) / sigma;
                let row = &mut geo.data[r * d..r * d + 5];
                row.copy_from_slice(&[q.x * sd, q.y * sd, q.z * sd, -q.norm_squared() / 2.0 * sd, sd]);
            }
            let padded = ViewEmbeddingTable { width: d, rows: table.rows.iter().map(|r| [vec![0.0; 5], r.clone()].concat()).collect() };
            inject_view_embedding(&geo, i, &padded)
        };
        let key_tokens = |ws: &WallPoints, i: usize| -> Result<(Tokens, Tokens)> {
            let mut k = Tokens::zeros(ws.keys.len(), d);
            let mut v = Tokens::zeros(ws.keys.len(), 3);
            for (r, p) in ws.keys.iter().enumerate() {
                let q = (p - center) / sigma;
                k.data[r * d..r * d + 5].copy_from_slice(&[q.x, q.y, q.z, 1.0, -q.norm_squared() / 2.0]);
                v.data[r * 3..r * 3 + 3].copy_from_slice(&facade_color(noise, p));
            }
            let padded = ViewEmbeddingTable { width: d, rows: table.rows.iter().map(|r| [vec![0.0; 5], r.clone()].concat()).collect() };
            Ok((inject_view_embedding(&k, i, &padded)?, v))
        };
        let qs: Vec<Tokens> = walls.iter().enumerate().map(|(i, w)| query_tokens(w, i)).collect::<Result<_>>()?;
        let kv: Vec<(Tokens, Tokens)> = walls.iter().enumerate().map(|(i, w)| key_tokens(w, i)).collect::<Result<_>>()?;
        let (ks, vs): (Vec<Tokens>, Vec<Tokens>) = kv.into_iter().unzip();
        // Views without wall pixels contribute nothing and query nothing; the
        // per-view token counts differ, so run the rows directly.
        let fused: Vec<Tokens> = (0..n)
            .into_par_iter()
            .map(|i| {
                let nb = neighborhood(i, n, self.radius);
                let keys: Vec<&Tokens> = nb.iter().map(|&j| &ks[j]).collect();
                let vals: Vec<&Tokens> = nb.iter().map(|&j| &vs[j]).collect();
                let mut out = Tokens::zeros(qs[i].rows, 3);
                if keys.iter().any(|k| k.rows > 0) {
                    out.data.par_chunks_mut(3).enumerate().for_each(|(r, o)| attend_row(qs[i].row(r), &keys, &vals, o));
                } else {
                    for (r, (_, p)) in walls[i].pixels.iter().enumerate() {
                        out.data[r * 3..r * 3 + 3].copy_from_slice(&facade_color(noise, p));
                    }
                }
                out
            })
            .collect();
        let mut means = Vec::with_capacity(n);
        let mut channels = 0;
        for (i, view) in batch.views.iter().enumerate() {
            let mut img = view.rgb.clone();
            for (r, (pix, _)) in walls[i].pixels.iter().enumerate() {
                img.data_mut()[pix * 3..pix * 3 + 3].copy_from_slice(fused[i].row(r));
            }
            let z = codec.encode(&img)?;
            channels = z.channels();
            means.push(z.into_data());
        }
        Ok(Box::new(BoundFacade { means, channels }))
    }
}

pub const MULTIVIEW_NAMES: &[&str] = &["facade"];

/// Multi-view backend lookup by name; `radius` is the attention
/// neighborhood, `key_stride` the key sampling stride in pixels.
pub fn create_multiview(name: &str, radius: usize, key_stride: usize) -> Result<Box<dyn MultiViewDenoiser>> {
    match name {
        "facade" => Ok(Box::new(FacadeBackend { radius, key_stride: key_stride.max(1), ..FacadeBackend::default() })),
        _ => Err(Error::Registry(name.to_string())),
    }
}

/// Joint DDIM inpainting of all views. Returns one image per view; pixels
/// outside the lateral mask equal the input exactly.
pub fn inpaint_views(
    batch: &MultiViewBatch,
    backend: &dyn MultiViewDenoiser,
    table: &ViewEmbeddingTable,
    codec: &dyn LatentCodec,
    noise: &NoiseField,
    steps: &[usize],
    sched: &NoiseSchedule,
) -> Result<Vec<RasterGrid>> {
    if !backend.cross_view() {
        return Err(Error::Contract(format!("backend {} has no cross-view support", backend.name())));
    }
    validate_step_list(steps, sched.len())?;
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let f = codec.factor();
    let encoded: Vec<RasterGrid> = batch.views.iter().map(|v| codec.encode(&v.rgb)).collect::<Result<_>>()?;
    let masks: Vec<RasterGrid> = batch.views.iter().map(|v| latent_mask(&v.lateral_mask, f)).collect::<Result<_>>()?;
    let bound = backend.bind(batch, table, codec, noise)?;
    let field = noise.fork(stream::FACADE as u64);
    let t0 = steps[0] as u32;
    let init: Vec<Vec<f64>> = encoded
        .iter()
        .enumerate()
        .map(|(i, e)| field.fill(i as u32, t0, [0, 0], e.width(), e.height(), e.channels()))
        .collect();
    let mut z: Vec<Vec<f64>> = init.clone();
    for (k, w) in steps.windows(2).enumerate() {
        let (t, tp) = (w[0], w[1]);
        let inputs: Vec<RasterGrid> = z
            .iter()
            .zip(&encoded)
            .zip(&masks)
            .map(|((zi, e), m)| stack_input(&e.with_data(e.channels(), zi.clone())?, e, m))
            .collect::<Result<_>>()?;
        let eps = bound
            .predict(&inputs, t, sched.alpha_bar(t))
            .map_err(|e| Error::Backend { step: k, t, source: Box::new(e) })?;
        let (sap, snp) = (sched.alpha_bar(tp).sqrt(), (1.0 - sched.alpha_bar(tp)).sqrt());
        for i in 0..z.len() {
            let mut next = ddim_update(&z[i], &eps[i], t, tp, sched)?;
            let c = encoded[i].channels();
            for (p, m) in masks[i].data().iter().enumerate() {
                if *m < 0.5 {
                    for ch in 0..c {
                        let j = p * c + ch;
                        next[j] = sap * encoded[i].data()[j] + snp * init[i][j];
                    }
                }
            }
            z[i] = next;
        }
    }
    let channels = batch.views[0].rgb.channels();
    z.iter()
        .zip(&encoded)
        .zip(&batch.views)
        .map(|((zi, e), v)| {
            let mut img = codec.decode(&e.with_data(e.channels(), zi.clone())?, channels)?;
            for (p, m) in v.lateral_mask.data().iter().enumerate() {
                if *m < 0.5 {
                    img.data_mut()[p * channels..(p + 1) * channels]
                        .copy_from_slice(&v.rgb.data()[p * channels..(p + 1) * channels]);
                }
            }
            Ok(img)
        })
        .collect()
}
