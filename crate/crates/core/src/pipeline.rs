//! Stage runner. Every stage reads its inputs from the bundle directory and
//! writes its outputs there, so a single stage can be rerun from cached
//! upstream artifacts.

use crate::bake::{apply_atlas, bake, AtlasLayout, BakeConfig};
use crate::camera::{circular_trajectory, Camera, Intrinsics, Trajectory};
use crate::cascade::{anchoring_correlation, run_cascade, CascadeOptions, ScaleLadder};
use crate::error::{Error, Result};
use crate::export::{export_mesh, MeshFormat};
use crate::grid::{PixelRect, RasterGrid};
use crate::io::{
    file_hash, read_cameras, read_height, read_json, read_png, read_raster, sha256_hex, view_file, write_bytes,
    write_height, write_json, write_png8, write_raster, write_view_bundle,
};
use crate::lift::{height_to_mesh, infer_height, HeightMap, HeightPrompt, DEFAULT_WALL_THRESHOLD};
use crate::mesh::TexturedMesh;
use crate::metrics::{
    adjacent_view_psnr, fid, interior_gradient, msg, patch_features, rerender_consistency, ConsistencyReport, SeamSpec,
};
use crate::multiview::{create_multiview, inpaint_views, MultiViewBatch, ViewEmbeddingTable, MULTIVIEW_NAMES};
use crate::noise::NoiseField;
use crate::qa::{
    dataset_manifest, derive_qa, extract_ground_truth, heights_from_grid_mesh, verify_record, DatasetManifest,
    DEFAULT_OBJECT_THRESHOLD,
};
use crate::render::{rasterize, CameraView};
use crate::sampler::registry::create_for;
use crate::sampler::{ddim_timesteps, BlockDctCodec, NoiseSchedule, ScheduleConfig, Task};
use crate::scenes::{procedural_anchor, AnchorClass};
use crate::tiler::{plan_windows, MergeMode, NoiseMode, TileEntry, TileManifest, TileOptions};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
/// Side of the PNG tiles a cascade level is stored in.
pub const LEVEL_TILE: usize = 256;
const MAX_ATLAS_RETRIES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Anchor,
    Cascade,
    Lift,
    Render,
    Inpaint,
    Bake,
    Metrics,
    Qa,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Anchor,
        Stage::Cascade,
        Stage::Lift,
        Stage::Render,
        Stage::Inpaint,
        Stage::Bake,
        Stage::Metrics,
        Stage::Qa,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Anchor => "anchor",
            Stage::Cascade => "cascade",
            Stage::Lift => "lift",
            Stage::Render => "render",
            Stage::Inpaint => "inpaint",
            Stage::Bake => "bake",
            Stage::Metrics => "metrics",
            Stage::Qa => "qa",
            Stage::Export => "export",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum AnchorSpec {
    /// Named procedural generator.
    Procedural { class: AnchorClass, size: usize },
    /// RGB image file placed at the ladder's coarsest gsd.
    File { path: PathBuf },
}

impl Default for AnchorSpec {
    fn default() -> Self {
        AnchorSpec::Procedural { class: AnchorClass::Urban, size: 256 }
    }
}

/// One backend name per generation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BackendNames {
    pub refine: String,
    pub height: String,
    pub lateral: String,
}

impl Default for BackendNames {
    fn default() -> Self {
        BackendNames { refine: "fractal-refiner".into(), height: "latent-height".into(), lateral: "facade".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SamplingConfig {
    pub schedule: ScheduleConfig,
    /// DDIM steps for the cascade and the height stage.
    pub steps: usize,
    pub inpaint_steps: usize,
    pub window: usize,
    pub merge: MergeMode,
    pub crop_limit: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            schedule: ScheduleConfig::default(),
            steps: 40,
            inpaint_steps: 20,
            window: 64,
            merge: MergeMode::CenterCrop,
            crop_limit: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LiftConfig {
    /// Side in pixels of the central block of the finest level that is lifted.
    pub block: usize,
    pub height_scale: f64,
    pub wall_threshold: f64,
    pub codec_factor: usize,
    pub prompt: String,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig {
            block: 128,
            height_scale: 40.0,
            wall_threshold: DEFAULT_WALL_THRESHOLD,
            codec_factor: 4,
            prompt: HeightPrompt::default().text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrajectoryConfig {
    pub views: usize,
    pub elevation_deg: f64,
    /// Orbit radius in multiples of the lifted block's diagonal.
    pub radius_factor: f64,
    pub fov_deg: f64,
    pub image_size: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { views: 8, elevation_deg: 30.0, radius_factor: 1.2, fov_deg: 60.0, image_size: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct InpaintConfig {
    pub radius: usize,
    pub key_stride: usize,
    pub embedding_width: usize,
    pub embedding_scale: f64,
    pub codec_factor: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig { radius: 1, key_stride: 3, embedding_width: 4, embedding_scale: 0.05, codec_factor: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct QaConfig {
    pub object_threshold: f64,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig { object_threshold: DEFAULT_OBJECT_THRESHOLD }
    }
}

fn default_formats() -> Vec<String> {
    vec!["glb".into(), "obj".into()]
}

fn default_bake() -> BakeConfig {
    BakeConfig { texel_density: 1.0, ..BakeConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineConfig {
    /// Required before running; there is no implicit entropy.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub anchor: AnchorSpec,
    #[serde(default)]
    pub ladder: ScaleLadder,
    #[serde(default)]
    pub backends: BackendNames,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub lift: LiftConfig,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub inpaint: InpaintConfig,
    #[serde(default = "default_bake")]
    pub bake: BakeConfig,
    #[serde(default)]
    pub qa: QaConfig,
    #[serde(default = "default_formats")]
    pub export_formats: Vec<String>,
    /// Bundle directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Stages switched off (with everything after them).
    #[serde(default)]
    pub stages: BTreeMap<Stage, bool>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            anchor: AnchorSpec::default(),
            ladder: ScaleLadder::default(),
            backends: BackendNames::default(),
            sampling: SamplingConfig::default(),
            lift: LiftConfig::default(),
            trajectory: TrajectoryConfig::default(),
            inpaint: InpaintConfig::default(),
            bake: default_bake(),
            qa: QaConfig::default(),
            export_formats: default_formats(),
            out: None,
            stages: BTreeMap::new(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| config_err("seed is required (set it in the config or pass --seed)"))
    }

    pub fn enabled(&self, s: Stage) -> bool {
        self.stages.get(&s).copied().unwrap_or(true)
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.ladder.validate().map_err(|e| config_err(e.to_string()))?;
        create_for(&self.backends.refine, Task::Refine, None).map_err(|e| config_err(e.to_string()))?;
        create_for(&self.backends.height, Task::Height, None).map_err(|e| config_err(e.to_string()))?;
        if !MULTIVIEW_NAMES.contains(&self.backends.lateral.as_str()) {
            return Err(config_err(format!("unknown multi-view backend `{}`", self.backends.lateral)));
        }
        let s = &self.sampling;
        NoiseSchedule::from_config(&s.schedule)?;
        ddim_timesteps(s.schedule.steps, s.steps)?;
        ddim_timesteps(s.schedule.steps, s.inpaint_steps)?;
        if s.window < 2 || s.window % 2 != 0 {
            return Err(config_err(format!("window {} must be even and at least 2", s.window)));
        }
        if s.crop_limit < s.window {
            return Err(config_err("crop limit is smaller than the window"));
        }
        if let AnchorSpec::Procedural { size, .. } = self.anchor {
            if size < 2 {
                return Err(config_err("anchor size must be at least 2"));
            }
        }
        let l = &self.lift;
        BlockDctCodec::new(l.codec_factor).map_err(|e| config_err(e.to_string()))?;
        if l.block < 2 || l.block % l.codec_factor != 0 {
            return Err(config_err(format!("lift block {} must be a multiple of the codec factor", l.block)));
        }
        if s.window % (2 * l.codec_factor) != 0 {
            return Err(config_err("window must be a multiple of twice the height codec factor"));
        }
        if !(l.height_scale > 0.0) {
            return Err(config_err("height scale must be positive"));
        }
        let t = &self.trajectory;
        if t.views == 0 || t.image_size < 8 || !(t.fov_deg > 0.0 && t.fov_deg < 180.0) || !(t.radius_factor > 0.0) {
            return Err(config_err("trajectory needs views, an image size >= 8, a fov in (0, 180) and a positive radius"));
        }
        BlockDctCodec::new(self.inpaint.codec_factor).map_err(|e| config_err(e.to_string()))?;
        if t.image_size % self.inpaint.codec_factor != 0 {
            return Err(config_err("view size must be a multiple of the inpainting codec factor"));
        }
        self.bake.validate()?;
        for f in &self.export_formats {
            f.parse::<MeshFormat>().map_err(|e| config_err(e.to_string()))?;
        }
        Ok(())
    }

    /// Hash of everything that affects outputs (the bundle path does not).
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Done,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub name: Stage,
    pub status: StageStatus,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Hash over the output file hashes.
    pub hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Not written: would break byte-identical manifests.
    #[serde(skip)]
    pub seconds: f64,
}

impl StageRecord {
    fn new(name: Stage, status: StageStatus) -> Self {
        StageRecord {
            name,
            status,
            inputs: Vec::new(),
            outputs: Vec::new(),
            hash: None,
            files: BTreeMap::new(),
            error: None,
            seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BundleManifest {
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl BundleManifest {
    fn fresh(cfg: &PipelineConfig) -> Result<Self> {
        Ok(BundleManifest {
            seed: cfg.seed()?,
            config_hash: cfg.content_hash(),
            stages: Stage::ALL.iter().map(|&s| StageRecord::new(s, StageStatus::Pending)).collect(),
        })
    }

    pub fn stage(&self, s: Stage) -> &StageRecord {
        self.stages.iter().find(|r| r.name == s).expect("every stage has a record")
    }

    fn set(&mut self, rec: StageRecord) {
        if let Some(r) = self.stages.iter_mut().find(|r| r.name == rec.name) {
            *r = rec;
        }
    }
}

/// Paths relative to the bundle root, with `/` separators.
fn rel(root: &Path, p: &Path) -> String {
    let r = p.strip_prefix(root).unwrap_or(p);
    r.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    root: &'a Path,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn dir(&self, s: Stage) -> PathBuf {
        self.root.join(s.name())
    }

    fn input(&mut self, p: PathBuf) -> PathBuf {
        if !self.inputs.contains(&p) {
            self.inputs.push(p.clone());
        }
        p
    }

    fn output(&mut self, p: PathBuf) {
        if !self.outputs.contains(&p) {
            self.outputs.push(p);
        }
    }

    fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::from_config(&self.cfg.sampling.schedule)
    }

    fn tile_options(&self) -> TileOptions {
        TileOptions { window: self.cfg.sampling.window, merge: self.cfg.sampling.merge, noise: NoiseMode::Shared, ..TileOptions::default() }
    }
}

fn raster_with_sidecar(ctx: &mut Ctx, p: PathBuf) -> Result<RasterGrid> {
    ctx.input(crate::io::sidecar_path(&p));
    read_raster(&ctx.input(p))
}

fn write_raster_out(ctx: &mut Ctx, p: PathBuf, r: &RasterGrid) -> Result<()> {
    write_raster(&p, r)?;
    ctx.output(crate::io::sidecar_path(&p));
    ctx.output(p);
    Ok(())
}

fn write_json_out<T: Serialize>(ctx: &mut Ctx, p: PathBuf, v: &T) -> Result<()> {
    write_json(&p, v)?;
    ctx.output(p);
    Ok(())
}

// ---- cascade levels on disk ----

fn level_dir(root: &Path, k: usize) -> PathBuf {
    root.join(Stage::Cascade.name()).join(format!("level_{k}"))
}

fn write_level(ctx: &mut Ctx, k: usize, r: &RasterGrid) -> Result<()> {
    let dir = level_dir(ctx.root, k);
    let mut tiles = Vec::new();
    for ty in (0..r.height()).step_by(LEVEL_TILE) {
        for tx in (0..r.width()).step_by(LEVEL_TILE) {
            let w = LEVEL_TILE.min(r.width() - tx);
            let h = LEVEL_TILE.min(r.height() - ty);
            let tile = r.crop_clamped(PixelRect::new(tx as i64, ty as i64, w, h));
            let name = format!("tile_{ty:05}_{tx:05}.png");
            write_raster_out(ctx, dir.join(&name), &tile)?;
            tiles.push(TileEntry { origin: [tx as i64, ty as i64], file: name });
        }
    }
    let m = TileManifest {
        window_px: ctx.cfg.sampling.window,
        stride: ctx.cfg.sampling.window / 2,
        merge_mode: ctx.cfg.sampling.merge,
        seed: ctx.seed,
        tiles,
    };
    write_json_out(ctx, dir.join("manifest.json"), &m)
}

fn read_level(ctx: &mut Ctx, k: usize) -> Result<RasterGrid> {
    let dir = level_dir(ctx.root, k);
    let m: TileManifest = read_json(&ctx.input(dir.join("manifest.json")))?;
    let tiles: Vec<(TileEntry, RasterGrid)> =
        m.tiles.into_iter().map(|t| Ok((t.clone(), raster_with_sidecar(ctx, dir.join(&t.file))?))).collect::<Result<_>>()?;
    let first = tiles.iter().find(|(t, _)| t.origin == [0, 0]).ok_or_else(|| Error::Contract(format!("{} has no origin tile", dir.display())))?;
    let w = tiles.iter().map(|(t, r)| t.origin[0] as usize + r.width()).max().unwrap_or(0);
    let h = tiles.iter().map(|(t, r)| t.origin[1] as usize + r.height()).max().unwrap_or(0);
    let mut out = RasterGrid::zeros(w, h, first.1.channels(), first.1.gsd(), first.1.anchor())?;
    for (t, r) in &tiles {
        out.paste(r, t.origin[0], t.origin[1])?;
    }
    Ok(out)
}

// ---- shared readers ----

struct Lifted {
    height: HeightMap,
    mesh: TexturedMesh,
}

fn load_lifted(ctx: &mut Ctx) -> Result<Lifted> {
    let dir = ctx.dir(Stage::Lift);
    let ortho = raster_with_sidecar(ctx, dir.join("ortho.png"))?;
    ctx.input(crate::io::sidecar_path(&dir.join("height.png")));
    let height = read_height(&ctx.input(dir.join("height.png")))?;
    let mesh = height_to_mesh(&height, &ortho, ctx.cfg.lift.wall_threshold, ctx.cfg.bake.tau)?;
    Ok(Lifted { height, mesh })
}

fn load_cameras(ctx: &mut Ctx) -> Result<Vec<Camera>> {
    let dir = ctx.dir(Stage::Render);
    ctx.input(dir.join("cameras.json"));
    read_cameras(&dir)
}

/// Re-rasterizes the coarse mesh for depth, masks and face ids, and takes
/// the colors from `stage`'s rgb files.
fn load_views(ctx: &mut Ctx, mesh: &TexturedMesh, cams: &[Camera], stage: Stage) -> Result<Vec<CameraView>> {
    let dir = ctx.dir(stage);
    cams.iter()
        .enumerate()
        .map(|(i, c)| {
            let rgb = read_png(&ctx.input(view_file(&dir, i, "rgb")))?;
            let v = rasterize(mesh, c, [0.5; 3], [0.0; 3])?;
            if !rgb.same_shape(&v.rgb) {
                return Err(Error::Contract(format!("view {i} of {stage} does not match its camera")));
            }
            Ok(CameraView { rgb: rgb.with_gsd_anchor(v.rgb.gsd(), v.rgb.anchor())?, ..v })
        })
        .collect()
}

fn load_baked(ctx: &mut Ctx, mesh: &TexturedMesh) -> Result<TexturedMesh> {
    let dir = ctx.dir(Stage::Bake);
    let layout: AtlasLayout = read_json(&ctx.input(dir.join("charts.json")))?;
    let atlas = read_png(&ctx.input(dir.join("atlas.png")))?;
    if atlas.width() != layout.atlas_size || atlas.height() != layout.atlas_size {
        return Err(Error::Contract("atlas image does not match the chart table".into()));
    }
    Ok(apply_atlas(mesh, &layout, atlas))
}

// ---- stages ----

fn stage_anchor(ctx: &mut Ctx) -> Result<()> {
    let gsd = ctx.cfg.ladder.levels[0];
    let anchor = match &ctx.cfg.anchor {
        AnchorSpec::Procedural { class, size } => {
            let o = -((*size / 2) as i64);
            procedural_anchor(*class, ctx.seed, *size, gsd, [o, o])?
        }
        AnchorSpec::File { path } => {
            let img = read_png(path)?;
            let img = if img.channels() == 3 { img } else { img.replicate_channels(3).or_else(|_| rgb_only(&img))? };
            let o = [-((img.width() / 2) as i64), -((img.height() / 2) as i64)];
            img.clone().with_gsd_anchor(gsd, RasterGrid::anchor_for(o, gsd))?
        }
    };
    let p = ctx.dir(Stage::Anchor).join("anchor.png");
    write_raster_out(ctx, p, &anchor)
}

fn rgb_only(img: &RasterGrid) -> Result<RasterGrid> {
    let parts: Vec<RasterGrid> = (0..3).map(|c| img.extract_channel(c)).collect::<Result<_>>()?;
    RasterGrid::concat_channels(&parts.iter().collect::<Vec<_>>())
}

fn stage_cascade(ctx: &mut Ctx) -> Result<()> {
    let anchor = raster_with_sidecar(ctx, ctx.dir(Stage::Anchor).join("anchor.png"))?;
    let backend = create_for(&ctx.cfg.backends.refine, Task::Refine, None)?;
    let sched = ctx.schedule()?;
    let s = &ctx.cfg.sampling;
    let opts = CascadeOptions {
        tile: ctx.tile_options(),
        crop_limit: s.crop_limit,
        steps: ddim_timesteps(s.schedule.steps, s.steps)?,
    };
    let levels = run_cascade(&anchor, &ctx.cfg.ladder, backend.as_ref(), ctx.seed, &sched, &opts)?;
    for (k, r) in levels.iter().enumerate().skip(1) {
        write_level(ctx, k, r)?;
    }
    let summary: Vec<serde_json::Value> = levels
        .iter()
        .enumerate()
        .map(|(k, r)| {
            serde_json::json!({
                "level": k, "gsd": r.gsd(), "width": r.width(), "height": r.height(),
                "originPx": r.world_origin_px(),
            })
        })
        .collect();
    let p = ctx.dir(Stage::Cascade).join("levels.json");
    write_json_out(ctx, p, &summary)
}

fn finest_level(ctx: &mut Ctx) -> Result<RasterGrid> {
    let n = ctx.cfg.ladder.levels.len();
    if n == 1 {
        raster_with_sidecar(ctx, ctx.dir(Stage::Anchor).join("anchor.png"))
    } else {
        read_level(ctx, n - 1)
    }
}

fn stage_lift(ctx: &mut Ctx) -> Result<()> {
    let fine = finest_level(ctx)?;
    let l = &ctx.cfg.lift;
    let f = l.codec_factor;
    if fine.width() < l.block || fine.height() < l.block {
        return Err(Error::Contract(format!("finest level {}x{} is smaller than the lift block {}", fine.width(), fine.height(), l.block)));
    }
    let align = |free: usize, origin: i64| -> i64 {
        // centered, and block aligned in world pixels for the latent tiler
        let off = (free / 2) as i64;
        off - (origin + off).rem_euclid(f as i64)
    };
    let o = fine.world_origin_px();
    let x0 = align(fine.width() - l.block, o[0]).max(0);
    let y0 = align(fine.height() - l.block, o[1]).max(0);
    let ortho = fine.crop_clamped(PixelRect::new(x0, y0, l.block, l.block));
    let dir = ctx.dir(Stage::Lift);
    write_raster_out(ctx, dir.join("ortho.png"), &ortho)?;
    let backend = create_for(&ctx.cfg.backends.height, Task::Height, None)?;
    let codec = BlockDctCodec::new(f)?;
    let sched = ctx.schedule()?;
    let s = &ctx.cfg.sampling;
    let steps = ddim_timesteps(s.schedule.steps, s.steps)?;
    let ortho_disk = read_raster(&dir.join("ortho.png"))?;
    let h = infer_height(
        &ortho_disk,
        backend.as_ref(),
        &codec,
        &HeightPrompt { text: l.prompt.clone() },
        &NoiseField::new(ctx.seed),
        &steps,
        &sched,
        &ctx.tile_options(),
        l.height_scale,
    )?;
    let hp = dir.join("height.png");
    write_height(&hp, &h)?;
    ctx.output(crate::io::sidecar_path(&hp));
    ctx.output(hp);
    // the mesh is built from the files, exactly as downstream stages see it
    let lifted = load_lifted(ctx)?;
    ctx.inputs.retain(|p| !p.starts_with(&dir));
    let p = dir.join("coarse.glb");
    for written in export_mesh(&lifted.mesh, MeshFormat::Glb, &p)? {
        ctx.output(written);
    }
    Ok(())
}

fn trajectory_cameras(cfg: &PipelineConfig, h: &HeightMap) -> Result<Vec<Camera>> {
    let r = &h.raster;
    let [w, hh] = r.world_extent();
    let a = r.anchor();
    let zs = r.data();
    let mean = zs.iter().sum::<f64>() / zs.len().max(1) as f64;
    let t = &cfg.trajectory;
    let traj = Trajectory {
        center: [a[0] + w / 2.0, a[1] - hh / 2.0, mean],
        radius: t.radius_factor * w.hypot(hh),
        views: t.views,
        elevation_deg: t.elevation_deg,
    };
    circular_trajectory(&traj, Intrinsics::from_fov(t.image_size, t.fov_deg))
}

fn stage_render(ctx: &mut Ctx) -> Result<()> {
    let lifted = load_lifted(ctx)?;
    let cams = trajectory_cameras(ctx.cfg, &lifted.height)?;
    let views: Vec<CameraView> = cams.iter().map(|c| rasterize(&lifted.mesh, c, [0.5; 3], [0.0; 3])).collect::<Result<_>>()?;
    for p in write_view_bundle(&ctx.dir(Stage::Render), &views, None)? {
        ctx.output(p);
    }
    Ok(())
}

fn stage_inpaint(ctx: &mut Ctx) -> Result<()> {
    let lifted = load_lifted(ctx)?;
    let cams = load_cameras(ctx)?;
    let views = load_views(ctx, &lifted.mesh, &cams, Stage::Render)?;
    let n = views.len();
    let ic = &ctx.cfg.inpaint;
    let backend = create_multiview(&ctx.cfg.backends.lateral, ic.radius, ic.key_stride)?;
    let table = ViewEmbeddingTable::seeded(n, ic.embedding_width, ctx.seed, ic.embedding_scale);
    let codec = BlockDctCodec::new(ic.codec_factor)?;
    let sched = ctx.schedule()?;
    let s = &ctx.cfg.sampling;
    let steps = ddim_timesteps(s.schedule.steps, s.inpaint_steps)?;
    let batch = MultiViewBatch::new(views)?;
    let j = inpaint_views(&batch, backend.as_ref(), &table, &codec, &NoiseField::new(ctx.seed), &steps, &sched)?;
    let dir = ctx.dir(Stage::Inpaint);
    for (i, img) in j.iter().enumerate() {
        let p = view_file(&dir, i, "rgb");
        write_png8(&p, img)?;
        ctx.output(p);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BakeReport {
    pub requested_atlas_size: usize,
    pub atlas_size: usize,
    pub charts: usize,
    pub texels: usize,
    pub unseen_fraction: f64,
    pub degenerate_faces: usize,
}

fn stage_bake(ctx: &mut Ctx) -> Result<()> {
    let lifted = load_lifted(ctx)?;
    let cams = load_cameras(ctx)?;
    let views = load_views(ctx, &lifted.mesh, &cams, Stage::Inpaint)?;
    let mut cfg = ctx.cfg.bake.clone();
    let mut tries = 0;
    let res = loop {
        match bake(&lifted.mesh, &views, &cfg) {
            Err(Error::AtlasCapacity { suggested_size, .. }) if tries < MAX_ATLAS_RETRIES => {
                cfg.atlas_size = suggested_size;
                tries += 1;
            }
            other => break other?,
        }
    };
    let dir = ctx.dir(Stage::Bake);
    let p = dir.join("atlas.png");
    write_png8(&p, &res.atlas)?;
    ctx.output(p);
    write_json_out(ctx, dir.join("charts.json"), &res.layout)?;
    let report = BakeReport {
        requested_atlas_size: ctx.cfg.bake.atlas_size,
        atlas_size: cfg.atlas_size,
        charts: res.layout.charts.len(),
        texels: res.records.len(),
        unseen_fraction: res.unseen_fraction,
        degenerate_faces: res.degenerate_faces.len(),
    };
    write_json_out(ctx, dir.join("report.json"), &report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelMetrics {
    pub level: usize,
    pub gsd: f64,
    pub width: usize,
    pub height: usize,
    /// `None` when the level fits in one window.
    pub msg: Option<f64>,
    pub interior_gradient: Option<f64>,
    /// Correlation of the box-downsampled level with its parent.
    pub anchoring_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricReport {
    pub levels: Vec<LevelMetrics>,
    pub height_msg: Option<f64>,
    pub height_interior_gradient: Option<f64>,
    /// Descriptor FID between the finest level and the upsampled parent over
    /// the same ground. Patch descriptors, not Inception features: not
    /// comparable with published FID values.
    pub detail_fid: Option<f64>,
    /// `None` when no view shows a wall.
    pub consistency: Option<ConsistencyReport>,
    pub adjacent_view_psnr: Vec<f64>,
}

const FID_PATCH: usize = 32;

/// MSG and interior gradient, or `None` for a raster without seams.
fn seam_metrics(r: &RasterGrid, seams: &SeamSpec) -> Result<(Option<f64>, Option<f64>)> {
    if seams.columns.is_empty() && seams.rows.is_empty() {
        return Ok((None, None));
    }
    Ok((Some(msg(r, seams)?), Some(interior_gradient(r, seams)?)))
}

fn stage_metrics(ctx: &mut Ctx) -> Result<()> {
    let window = ctx.cfg.sampling.window;
    let factor = ctx.cfg.ladder.factor;
    let n = ctx.cfg.ladder.levels.len();
    let mut rasters = vec![raster_with_sidecar(ctx, ctx.dir(Stage::Anchor).join("anchor.png"))?];
    for k in 1..n {
        rasters.push(read_level(ctx, k)?);
    }
    let mut levels = Vec::new();
    for (k, r) in rasters.iter().enumerate() {
        let seams = SeamSpec::from_plan(&plan_windows([r.width(), r.height()], window)?);
        let (msg, interior_gradient) = seam_metrics(r, &seams)?;
        let anchoring_r = if k == 0 { None } else { Some(anchoring_correlation(&rasters[k - 1], r, factor)?) };
        levels.push(LevelMetrics {
            level: k,
            gsd: r.gsd(),
            width: r.width(),
            height: r.height(),
            msg,
            interior_gradient,
            anchoring_r,
        });
    }
    let detail_fid = if n >= 2 {
        let (fine, parent) = (&rasters[n - 1], &rasters[n - 2]);
        let fo = fine.world_origin_px();
        let po = parent.world_origin_px();
        let rect = PixelRect::new(
            fo[0].div_euclid(factor as i64) - po[0],
            fo[1].div_euclid(factor as i64) - po[1],
            fine.width() / factor,
            fine.height() / factor,
        );
        let up = parent.crop_clamped(rect).upsample(factor)?;
        Some(fid(&patch_features(&up, FID_PATCH)?, &patch_features(fine, FID_PATCH)?)?)
    } else {
        None
    };
    let lifted = load_lifted(ctx)?;
    let hr = &lifted.height.raster;
    let hw = hr.width().div_ceil(ctx.cfg.lift.codec_factor) * ctx.cfg.lift.codec_factor;
    let hh = hr.height().div_ceil(ctx.cfg.lift.codec_factor) * ctx.cfg.lift.codec_factor;
    let hseams = SeamSpec::from_plan(&plan_windows([hw, hh], window)?);
    let hseams = SeamSpec {
        columns: hseams.columns.into_iter().filter(|c| *c < hr.width() as i64).collect(),
        rows: hseams.rows.into_iter().filter(|r| *r < hr.height() as i64).collect(),
    };
    let cams = load_cameras(ctx)?;
    let views = load_views(ctx, &lifted.mesh, &cams, Stage::Inpaint)?;
    let baked = load_baked(ctx, &lifted.mesh)?;
    let report: BakeReport = read_json(&ctx.input(ctx.dir(Stage::Bake).join("report.json")))?;
    let consistency = match rerender_consistency(&baked, &views, report.unseen_fraction) {
        Ok(c) => Some(c),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let images: Vec<RasterGrid> = views.iter().map(|v| v.rgb.clone()).collect();
    let adjacent = adjacent_view_psnr(&views, &images, 0.5)?;
    let (height_msg, height_interior_gradient) = seam_metrics(hr, &hseams)?;
    let m = MetricReport {
        levels,
        height_msg,
        height_interior_gradient,
        detail_fid,
        consistency,
        adjacent_view_psnr: adjacent,
    };
    let p = ctx.dir(Stage::Metrics).join("report.json");
    write_json_out(ctx, p, &m)
}

fn stage_qa(ctx: &mut Ctx) -> Result<()> {
    let lifted = load_lifted(ctx)?;
    let cams = load_cameras(ctx)?;
    let heights = heights_from_grid_mesh(&lifted.mesh, &lifted.height.raster)?;
    let gt = extract_ground_truth(&heights, &cams, ctx.cfg.qa.object_threshold)?;
    let mut records = Vec::new();
    for (i, _) in cams.iter().enumerate() {
        let img = rel(ctx.root, &view_file(&ctx.dir(Stage::Inpaint), i, "rgb"));
        records.extend(derive_qa(&gt, &img, i, ctx.seed)?);
    }
    if let Some(bad) = records.iter().find(|r| !verify_record(r, &gt)) {
        return Err(Error::Contract(format!("QA record does not re-derive from ground truth: {}", bad.question)));
    }
    let dir = ctx.dir(Stage::Qa);
    let mut lines = Vec::new();
    for r in &records {
        lines.extend(serde_json::to_vec(r)?);
        lines.push(b'\n');
    }
    let p = dir.join("records.jsonl");
    write_bytes(&p, &lines)?;
    ctx.output(p);
    write_json_out(ctx, dir.join("ground_truth.json"), &gt)?;
    let man_made = usize::from(matches!(ctx.cfg.anchor, AnchorSpec::Procedural { class: AnchorClass::Urban, .. }));
    let m: DatasetManifest = dataset_manifest(&records, 1, man_made);
    write_json_out(ctx, dir.join("manifest.json"), &m)
}

fn stage_export(ctx: &mut Ctx) -> Result<()> {
    let lifted = load_lifted(ctx)?;
    let baked = load_baked(ctx, &lifted.mesh)?;
    let dir = ctx.dir(Stage::Export);
    for f in &ctx.cfg.export_formats {
        let fmt: MeshFormat = f.parse()?;
        let ext = match fmt {
            MeshFormat::Glb => "glb",
            MeshFormat::Obj => "obj",
        };
        for p in export_mesh(&baked, fmt, &dir.join(format!("scene.{ext}")))? {
            ctx.output(p);
        }
    }
    Ok(())
}

fn execute(ctx: &mut Ctx, s: Stage) -> Result<()> {
    match s {
        Stage::Anchor => stage_anchor(ctx),
        Stage::Cascade => stage_cascade(ctx),
        Stage::Lift => stage_lift(ctx),
        Stage::Render => stage_render(ctx),
        Stage::Inpaint => stage_inpaint(ctx),
        Stage::Bake => stage_bake(ctx),
        Stage::Metrics => stage_metrics(ctx),
        Stage::Qa => stage_qa(ctx),
        Stage::Export => stage_export(ctx),
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        out.push_str(": ");
        out.push_str(&s.to_string());
        cur = s.source();
    }
    out
}

fn clear_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn run_one(cfg: &PipelineConfig, root: &Path, s: Stage) -> Result<StageRecord> {
    let mut ctx = Ctx { cfg, root, seed: cfg.seed()?, inputs: Vec::new(), outputs: Vec::new() };
    clear_dir(&ctx.dir(s))?;
    let start = Instant::now();
    execute(&mut ctx, s)?;
    let mut rec = StageRecord::new(s, StageStatus::Done);
    rec.seconds = start.elapsed().as_secs_f64();
    let mut inputs: Vec<String> = ctx.inputs.iter().map(|p| rel(root, p)).collect();
    inputs.sort();
    rec.inputs = inputs;
    for p in &ctx.outputs {
        rec.files.insert(rel(root, p), file_hash(p)?);
    }
    rec.outputs = rec.files.keys().cloned().collect();
    let joined: String = rec.files.iter().map(|(p, h)| format!("{p}\t{h}\n")).collect();
    rec.hash = Some(sha256_hex(joined.as_bytes()));
    Ok(rec)
}

fn load_manifest(cfg: &PipelineConfig, root: &Path) -> Result<BundleManifest> {
    let p = root.join(MANIFEST_FILE);
    if p.exists() {
        let m: BundleManifest = read_json(&p)?;
        if m.config_hash == cfg.content_hash() {
            return Ok(m);
        }
    }
    BundleManifest::fresh(cfg)
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.out.clone().ok_or_else(|| config_err("no output directory (set `out` or pass --out)"))
}

/// Runs `stages` in pipeline order, updating the bundle manifest. A failed
/// stage is recorded with its error; later stages in the list are marked
/// skipped and the error is returned as [`Error::Stage`].
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> Result<BundleManifest> {
    cfg.validate()?;
    let root = out_dir(cfg)?;
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    write_json(&root.join(CONFIG_FILE), cfg)?;
    let mut manifest = load_manifest(cfg, &root)?;
    let mut order: Vec<Stage> = stages.to_vec();
    order.sort();
    order.dedup();
    let mut failure = None;
    let mut off = false;
    for s in order {
        off |= !cfg.enabled(s);
        if off || failure.is_some() {
            clear_dir(&root.join(s.name()))?;
            manifest.set(StageRecord::new(s, StageStatus::Skipped));
            continue;
        }
        match run_one(cfg, &root, s) {
            Ok(rec) => manifest.set(rec),
            Err(e) => {
                let mut rec = StageRecord::new(s, StageStatus::Failed);
                rec.error = Some(error_chain(&e));
                manifest.set(rec);
                failure = Some(Error::Stage { stage: s.name().into(), source: Box::new(e) });
            }
        }
        write_json(&root.join(MANIFEST_FILE), &manifest)?;
    }
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Full run: every stage in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<BundleManifest> {
    run_stages(cfg, &Stage::ALL)
}
