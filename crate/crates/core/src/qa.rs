//! Spatial-reasoning QA records derived from explicit scene geometry.
//!
//! Ground truth comes from the height field: raised components, their
//! heights and footprints, per-view depth order and pairwise relations.
//! Every image gets exactly one record per task, instantiated from fixed
//! templates; each record names its template and arguments so the answer can
//! be recomputed from ground truth alone.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::RasterGrid;
use crate::lift::HeightMap;
use crate::mesh::TexturedMesh;
use crate::noise::{hash_words, label_word, stream};
use crate::render::{rasterize, CameraView};
use serde::{Deserialize, Serialize};

pub const DEFAULT_OBJECT_THRESHOLD: f64 = 2.0;
pub const TIE_TOLERANCE: f64 = 0.5;
/// Mean slope (degrees) below which terrain counts as flat.
pub const FLAT_SLOPE_DEG: f64 = 2.0;
/// Mean slope (degrees) below which terrain counts as gentle.
pub const GENTLE_SLOPE_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Spatial,
    Morphology,
    Counting,
    Geometry,
    Caption,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Spatial, Task::Morphology, Task::Counting, Task::Geometry, Task::Caption];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerFormat {
    Boolean,
    Number,
    Text,
    Choice,
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Component {
    pub label: String,
    pub pixels: usize,
    pub footprint_m2: f64,
    pub centroid: [f64; 2],
    pub height: HeightStats,
    /// Top height above the terrain reference.
    pub relative_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewOrder {
    pub view: usize,
    /// Component indices, nearest first.
    pub order: Vec<usize>,
    pub depths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneGroundTruth {
    pub terrain: HeightStats,
    pub reference_height: f64,
    pub threshold: f64,
    pub mean_slope_deg: f64,
    pub components: Vec<Component>,
    pub views: Vec<ViewOrder>,
    /// `(a, b)`: component `a` is higher than `b` by more than the tie tolerance.
    pub higher_than: Vec<(usize, usize)>,
}

fn stats(v: impl Iterator<Item = f64>) -> HeightStats {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for x in v {
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
        n += 1;
    }
    if n == 0 {
        HeightStats { min: 0.0, mean: 0.0, max: 0.0 }
    } else {
        HeightStats { min: lo, mean: sum / n as f64, max: hi }
    }
}

pub fn component_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("S{}", i + 1)
    }
}

/// 4-connected labelling of `mask`, components numbered in row-major order
/// of their first pixel.
pub fn label_components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            comp.push(p);
            let (x, y) = (p % w, p / w);
            let mut push = |q: usize| {
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < w {
                push(p + 1);
            }
            if y > 0 {
                push(p - w);
            }
            if y + 1 < h {
                push(p + w);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Recovers the height raster from a grid mesh made by `height_to_mesh`
/// (one vertex per pixel, row-major).
pub fn heights_from_grid_mesh(mesh: &TexturedMesh, like: &RasterGrid) -> Result<HeightMap> {
    if mesh.vertices.len() != like.pixel_count() {
        return Err(Error::Contract("mesh is not a grid over this raster".into()));
    }
    HeightMap::from_raster(like.with_data(1, mesh.vertices.iter().map(|v| v[2]).collect())?)
}

/// Ground truth from a height map: components are 4-connected regions
/// above `median + object_threshold`.
pub fn extract_ground_truth(h: &HeightMap, cameras: &[Camera], object_threshold: f64) -> Result<SceneGroundTruth> {
    let r = &h.raster;
    let (w, hh) = (r.width(), r.height());
    let data = r.data();
    if data.is_empty() {
        return Err(Error::Contract("empty height map".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let reference = sorted[(sorted.len() - 1) / 2];
    let threshold = reference + object_threshold;
    let mask: Vec<bool> = data.iter().map(|v| *v > threshold).collect();
    let g = r.gsd();
    let components: Vec<Component> = label_components(&mask, w, hh)
        .into_iter()
        .enumerate()
        .map(|(i, px)| {
            let (mut sx, mut sy) = (0.0, 0.0);
            for p in &px {
                let [x, y] = r.pixel_center_world((p % w) as f64, (p / w) as f64);
                sx += x;
                sy += y;
            }
            let n = px.len() as f64;
            let height = stats(px.iter().map(|p| data[*p]));
            Component {
                label: component_label(i),
                pixels: px.len(),
                footprint_m2: n * g * g,
                centroid: [sx / n, sy / n],
                relative_height: height.max - reference,
                height,
            }
        })
        .collect();
    let mut slope = 0.0;
    let mut ns = 0usize;
    for y in 0..hh {
        for x in 0..w {
            let dx = if x + 1 < w { r.get(x + 1, y, 0) - r.get(x, y, 0) } else { 0.0 };
            let dy = if y + 1 < hh { r.get(x, y + 1, 0) - r.get(x, y, 0) } else { 0.0 };
            if mask[y * w + x] {
                continue;
            }
            slope += ((dx * dx + dy * dy).sqrt() / g).atan().to_degrees();
            ns += 1;
        }
    }
    let views = cameras
        .iter()
        .map(|cam| {
            let depths: Vec<f64> = components
                .iter()
                .map(|c| cam.to_camera(&Vec3::new(c.centroid[0], c.centroid[1], 0.5 * c.height.max)).z)
                .collect();
            let mut order: Vec<usize> = (0..components.len()).collect();
            order.sort_by(|a, b| depths[*a].total_cmp(&depths[*b]).then(a.cmp(b)));
            ViewOrder { view: cam.index, order, depths }
        })
        .collect();
    let mut higher_than = Vec::new();
    for (a, ca) in components.iter().enumerate() {
        for (b, cb) in components.iter().enumerate() {
            if ca.height.max - cb.height.max > TIE_TOLERANCE {
                higher_than.push((a, b));
            }
        }
    }
    Ok(SceneGroundTruth {
        terrain: stats(data.iter().copied()),
        reference_height: reference,
        threshold,
        mean_slope_deg: if ns == 0 { 0.0 } else { slope / ns as f64 },
        components,
        views,
        higher_than,
    })
}

impl SceneGroundTruth {
    pub fn slope_class(&self) -> &'static str {
        if self.mean_slope_deg < FLAT_SLOPE_DEG {
            "flat"
        } else if self.mean_slope_deg < GENTLE_SLOPE_DEG {
            "gentle"
        } else {
            "steep"
        }
    }

    fn index_of(&self, label: &str) -> Option<usize> {
        self.components.iter().position(|c| c.label == label)
    }

    fn tallest(&self) -> Option<&Component> {
        self.components.iter().max_by(|a, b| a.height.max.total_cmp(&b.height.max))
    }

    pub fn view(&self, index: usize) -> Option<&ViewOrder> {
        self.views.iter().find(|v| v.view == index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub template: String,
    pub args: Vec<String>,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QaRecord {
    pub image: String,
    pub view: usize,
    pub task: Task,
    pub question: String,
    pub answer: String,
    pub format: AnswerFormat,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    pub provenance: Provenance,
}

fn num(v: f64) -> String {
    format!("{:.1}", v)
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}

/// Question, answer, format, choices and provenance fields of a template
/// instance, or `None` if the ground truth does not support it.
type Instance = (String, String, AnswerFormat, Vec<String>, Vec<&'static str>);

/// Evaluates template `name` with `args` against `gt` for view `view`.
pub fn evaluate_template(name: &str, args: &[String], gt: &SceneGroundTruth, view: usize) -> Option<Instance> {
    let comp = |l: &String| gt.index_of(l);
    match name {
        "spatial.nearer" => {
            let (a, b) = (comp(args.first()?)?, comp(args.get(1)?)?);
            let v = gt.view(view)?;
            let (da, db) = (v.depths[a], v.depths[b]);
            if (da - db).abs() <= TIE_TOLERANCE {
                return None;
            }
            let ans = if da < db { &args[0] } else { &args[1] };
            Some((
                format!("Which structure is closer to the camera, {} or {}?", args[0], args[1]),
                ans.clone(),
                AnswerFormat::Choice,
                vec![args[0].clone(), args[1].clone()],
                vec!["views.depths"],
            ))
        }
        "spatial.any" => Some((
            "Is there any raised structure in view?".into(),
            yes_no(!gt.components.is_empty()),
            AnswerFormat::Boolean,
            vec![],
            vec!["components"],
        )),
        "morphology.slope" => Some((
            "How would you describe the terrain slope: flat, gentle or steep?".into(),
            gt.slope_class().into(),
            AnswerFormat::Choice,
            vec!["flat".into(), "gentle".into(), "steep".into()],
            vec!["meanSlopeDeg"],
        )),
        "morphology.relief" => Some((
            "What is the elevation range of the scene in meters?".into(),
            num(gt.terrain.max - gt.terrain.min),
            AnswerFormat::Number,
            vec![],
            vec!["terrain.min", "terrain.max"],
        )),
        "counting.count" => {
            if gt.components.is_empty() {
                return None;
            }
            Some((
                "How many raised structures are in the scene?".into(),
                gt.components.len().to_string(),
                AnswerFormat::Number,
                vec![],
                vec!["components"],
            ))
        }
        "counting.empty" => Some((
            "Is the scene free of raised structures?".into(),
            yes_no(gt.components.is_empty()),
            AnswerFormat::Boolean,
            vec![],
            vec!["components"],
        )),
        "geometry.taller" => {
            let (a, b) = (comp(args.first()?)?, comp(args.get(1)?)?);
            let ans = if gt.higher_than.contains(&(a, b)) {
                &args[0]
            } else if gt.higher_than.contains(&(b, a)) {
                &args[1]
            } else {
                return None;
            };
            Some((
                format!("Which structure is taller, {} or {}?", args[0], args[1]),
                ans.clone(),
                AnswerFormat::Choice,
                vec![args[0].clone(), args[1].clone()],
                vec!["higherThan"],
            ))
        }
        "geometry.tallest-height" => {
            let t = gt.tallest()?;
            Some((
                "What is the height of the tallest structure above the surrounding ground in meters?".into(),
                num(t.relative_height),
                AnswerFormat::Number,
                vec![],
                vec!["components.relativeHeight"],
            ))
        }
        "geometry.max-elevation" => Some((
            "What is the maximum terrain elevation in meters?".into(),
            num(gt.terrain.max),
            AnswerFormat::Number,
            vec![],
            vec!["terrain.max"],
        )),
        "caption.summary" => {
            let n = gt.components.len();
            let text = match gt.tallest() {
                Some(t) => format!(
                    "A built-up scene with {n} raised structure{}; the tallest rises {} m above {} terrain.",
                    if n == 1 { "" } else { "s" },
                    num(t.relative_height),
                    gt.slope_class()
                ),
                None => format!("An open scene with {} terrain and {} m of relief.", gt.slope_class(), num(gt.terrain.max - gt.terrain.min)),
            };
            Some(("Describe the scene.".into(), text, AnswerFormat::Text, vec![], vec!["components", "meanSlopeDeg", "terrain"]))
        }
        _ => None,
    }
}

fn pick(h: u64, n: usize) -> usize {
    (h % n as u64) as usize
}

/// Candidate `(template, args)` lists per task, preferred first; the last
/// entry of every list always applies.
fn candidates(task: Task, gt: &SceneGroundTruth, h: u64) -> Vec<(&'static str, Vec<String>)> {
    let n = gt.components.len();
    let pair = |h: u64| -> Vec<String> {
        let a = pick(h, n);
        let b = (a + 1 + pick(h >> 16, n - 1)) % n;
        vec![component_label(a), component_label(b)]
    };
    let mut out = Vec::new();
    match task {
        Task::Spatial => {
            if n >= 2 {
                out.push(("spatial.nearer", pair(h)));
                // deterministic sweep so a tie on the random pair can still resolve
                for a in 0..n {
                    for b in a + 1..n {
                        out.push(("spatial.nearer", vec![component_label(a), component_label(b)]));
                    }
                }
            }
            out.push(("spatial.any", vec![]));
        }
        Task::Morphology => {
            if h & 1 == 0 {
                out.push(("morphology.slope", vec![]));
                out.push(("morphology.relief", vec![]));
            } else {
                out.push(("morphology.relief", vec![]));
                out.push(("morphology.slope", vec![]));
            }
        }
        Task::Counting => {
            out.push(("counting.count", vec![]));
            out.push(("counting.empty", vec![]));
        }
        Task::Geometry => {
            if n >= 2 {
                out.push(("geometry.taller", pair(h)));
                for a in 0..n {
                    for b in a + 1..n {
                        out.push(("geometry.taller", vec![component_label(a), component_label(b)]));
                    }
                }
            }
            if n >= 1 {
                out.push(("geometry.tallest-height", vec![]));
            }
            out.push(("geometry.max-elevation", vec![]));
        }
        Task::Caption => out.push(("caption.summary", vec![])),
    }
    out
}

/// Exactly one record per task for one image of view `view`.
pub fn derive_qa(gt: &SceneGroundTruth, image: &str, view: usize, seed: u64) -> Result<Vec<QaRecord>> {
    Task::ALL
        .iter()
        .map(|&task| {
            let h = hash_words(seed, &[stream::QA as u64, label_word(image), task as u64]);
            for (name, args) in candidates(task, gt, h) {
                if let Some((question, answer, format, choices, fields)) = evaluate_template(name, &args, gt, view) {
                    return Ok(QaRecord {
                        image: image.into(),
                        view,
                        task,
                        question,
                        answer,
                        format,
                        choices,
                        provenance: Provenance { template: name.into(), args, fields: fields.into_iter().map(String::from).collect() },
                    });
                }
            }
            Err(Error::Contract(format!("no template applies for task {task:?}")))
        })
        .collect()
}

/// Re-evaluates a record's template against `gt`; true iff question and
/// answer are reproduced exactly.
pub fn verify_record(rec: &QaRecord, gt: &SceneGroundTruth) -> bool {
    evaluate_template(&rec.provenance.template, &rec.provenance.args, gt, rec.view)
        .is_some_and(|(q, a, f, _, _)| q == rec.question && a == rec.answer && f == rec.format)
}

/// Renders `mesh` from each camera.
pub fn render_trajectory(mesh: &TexturedMesh, cameras: &[Camera]) -> Result<Vec<CameraView>> {
    use rayon::prelude::*;
    cameras.par_iter().map(|c| rasterize(mesh, c, [0.5; 3], [0.0; 3])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetManifest {
    pub scenes: usize,
    pub images: usize,
    pub records: usize,
    pub per_task: Vec<(Task, usize)>,
    pub man_made_fraction: f64,
}

pub fn dataset_manifest(records: &[QaRecord], scenes: usize, man_made_scenes: usize) -> DatasetManifest {
    let images: std::collections::BTreeSet<&str> = records.iter().map(|r| r.image.as_str()).collect();
    DatasetManifest {
        scenes,
        images: images.len(),
        records: records.len(),
        per_task: Task::ALL.iter().map(|t| (*t, records.iter().filter(|r| r.task == *t).count())).collect(),
        man_made_fraction: if scenes == 0 { 0.0 } else { man_made_scenes as f64 / scenes as f64 },
    }
}
