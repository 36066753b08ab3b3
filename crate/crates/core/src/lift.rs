//! Height inference from imagery and heightmap meshing.

use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::mesh::{FaceClass, TexturedMesh, ORTHO_MATERIAL};
use crate::noise::NoiseField;
use crate::sampler::{Condition, Denoiser, LatentCodec, NoiseSchedule, Task};
use crate::tiler::{generate_unbounded_latent, TileOptions};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PROMPT: &str = "predict the heights of prominent features";
pub const DEFAULT_WALL_THRESHOLD: f64 = 3.0;
/// Noise level index reserved for height sampling.
pub const HEIGHT_LEVEL: u32 = 100;

/// Single-channel height raster in meters with the range used for 8-bit files.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub raster: RasterGrid,
    pub valid_range: (f64, f64),
}

impl HeightMap {
    /// Ingests raw heights: rejects NaN, clamps negatives to 0 and records
    /// the observed range.
    pub fn from_raster(raster: RasterGrid) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::Contract("height map must have one channel".into()));
        }
        if raster.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("height map contains NaN".into()));
        }
        let raster = raster.map(|v| v.max(0.0));
        let (lo, hi) = raster.min_max();
        let valid_range = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
        Ok(HeightMap { raster, valid_range })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightPrompt {
    pub text: String,
}

impl Default for HeightPrompt {
    fn default() -> Self {
        HeightPrompt { text: DEFAULT_PROMPT.into() }
    }
}

/// Conditional height generation over the latent tiler. The backend works in
/// `codec`'s latent space and returns normalized heights; they are averaged
/// over channels, clamped to `[0, 1]` and scaled by `height_scale` meters.
#[allow(clippy::too_many_arguments)]
pub fn infer_height(
    ortho: &RasterGrid,
    backend: &dyn Denoiser,
    codec: &dyn LatentCodec,
    prompt: &HeightPrompt,
    noise: &NoiseField,
    steps: &[usize],
    sched: &NoiseSchedule,
    opts: &TileOptions,
    height_scale: f64,
) -> Result<HeightMap> {
    if backend.task() != Task::Height {
        return Err(Error::Registry(format!("{} is not a height backend", backend.name())));
    }
    if prompt.text.trim().is_empty() {
        return Err(Error::Contract("height prompt must be non-empty".into()));
    }
    let mut tpl = Condition::new(*noise);
    tpl.prompt = Some(prompt.text.clone());
    tpl.level = HEIGHT_LEVEL;
    tpl.target_gsd = Some(ortho.gsd());
    let out = generate_unbounded_latent(ortho, &tpl, codec, backend, steps, sched, opts)?;
    let h = out.channel_mean().map(|v| v.clamp(0.0, 1.0) * height_scale);
    let mut hm = HeightMap::from_raster(h)?;
    hm.valid_range = (0.0, height_scale);
    Ok(hm)
}

/// Grid mesh with one vertex per pixel center at the pixel's height and two
/// triangles per cell. Cells whose height range exceeds `wall_threshold` are
/// split along the diagonal with the smaller height difference, so a step
/// edge yields one flat and one near-vertical triangle instead of two slanted
/// ones. UVs point at ortho texel centers; vertical faces are left
/// untextured for the lateral stage.
pub fn height_to_mesh(h: &HeightMap, ortho: &RasterGrid, wall_threshold: f64, tau: f64) -> Result<TexturedMesh> {
    let r = &h.raster;
    if r.width() != ortho.width() || r.height() != ortho.height() || r.gsd() != ortho.gsd() || r.anchor() != ortho.anchor() {
        return Err(Error::Contract("height map and ortho image must share extent, gsd and anchor".into()));
    }
    let (w, hgt) = (r.width(), r.height());
    if w < 2 || hgt < 2 {
        return Err(Error::Contract("meshing needs at least 2x2 pixels".into()));
    }
    let mut mesh = TexturedMesh { textures: vec![ortho.clone()], ..TexturedMesh::default() };
    mesh.vertices.reserve(w * hgt);
    for j in 0..hgt {
        for i in 0..w {
            let [x, y] = r.pixel_center_world(i as f64, j as f64);
            mesh.vertices.push([x, y, r.get(i, j, 0)]);
        }
    }
    let uv_of = |i: usize, j: usize| [(i as f64 + 0.5) / w as f64, (j as f64 + 0.5) / hgt as f64];
    let idx = |i: usize, j: usize| (j * w + i) as u32;
    let cells = (w - 1) * (hgt - 1);
    mesh.faces.reserve(2 * cells);
    mesh.uv.reserve(2 * cells);
    for j in 0..hgt - 1 {
        for i in 0..w - 1 {
            let z = |a: usize, b: usize| r.get(a, b, 0);
            let (z00, z10, z01, z11) = (z(i, j), z(i + 1, j), z(i, j + 1), z(i + 1, j + 1));
            let range = z00.max(z10).max(z01).max(z11) - z00.min(z10).min(z01).min(z11);
            let main_diag = range > wall_threshold && (z00 - z11).abs() < (z10 - z01).abs();
            let c00 = (i, j);
            let c10 = (i + 1, j);
            let c01 = (i, j + 1);
            let c11 = (i + 1, j + 1);
            let tris = if main_diag { [[c00, c01, c11], [c00, c11, c10]] } else { [[c00, c01, c10], [c10, c01, c11]] };
            for t in tris {
                mesh.faces.push([idx(t[0].0, t[0].1), idx(t[1].0, t[1].1), idx(t[2].0, t[2].1)]);
                mesh.uv.push([uv_of(t[0].0, t[0].1), uv_of(t[1].0, t[1].1), uv_of(t[2].0, t[2].1)]);
            }
        }
    }
    mesh.reclassify(tau);
    mesh.material =
        mesh.face_class.iter().map(|c| if *c == FaceClass::Horizontal { Some(ORTHO_MATERIAL) } else { None }).collect();
    Ok(mesh)
}

fn check_range(range: (f64, f64)) -> Result<()> {
    if !(range.1 > range.0) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::Quantization(format!("degenerate range {range:?}")));
    }
    Ok(())
}

/// Affine 8-bit quantization with round-half-up. Negative heights are
/// clamped to 0 first; results outside the range saturate.
pub fn quantize_height(h: &RasterGrid, range: (f64, f64)) -> Result<Vec<u8>> {
    check_range(range)?;
    let span = range.1 - range.0;
    Ok(h
        .data()
        .iter()
        .map(|v| {
            let q = ((v.max(0.0) - range.0) / span * 255.0 + 0.5).floor();
            q.clamp(0.0, 255.0) as u8
        })
        .collect())
}

pub fn dequantize_height(q: &[u8], range: (f64, f64), like: &RasterGrid) -> Result<RasterGrid> {
    check_range(range)?;
    let span = range.1 - range.0;
    like.with_data(1, q.iter().map(|v| range.0 + *v as f64 / 255.0 * span).collect())
}
