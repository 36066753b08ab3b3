//! Synthetic scenes: the textured box used for bake and consistency checks,
//! small height-map scenes for the QA engine, and procedural anchor images.

use crate::bake::{classify_faces, pack_atlas, AtlasLayout, GUTTER};
use crate::camera::{circular_trajectory, Camera, Intrinsics, Trajectory};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::RasterGrid;
use crate::lift::HeightMap;
use crate::mesh::{push_box, push_quad, FaceClass, TexturedMesh, ORTHO_MATERIAL};
use crate::multiview::facade_color;
use crate::noise::{stream, NoiseField};
use serde::{Deserialize, Serialize};

/// Smooth world-space color field used to texture synthetic geometry.
pub fn solid_texture(noise: &NoiseField, p: &Vec3) -> [f64; 3] {
    facade_color(noise, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BoxSceneSpec {
    pub ground_half: f64,
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub ortho_gsd: f64,
    pub texel_density: f64,
    pub atlas_size: usize,
    pub view_size: usize,
    pub fov_deg: f64,
    pub views: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub seed: u64,
}

impl Default for BoxSceneSpec {
    fn default() -> Self {
        BoxSceneSpec {
            ground_half: 20.0,
            box_min: [-5.0, -4.0, 0.0],
            box_max: [5.0, 4.0, 8.0],
            ortho_gsd: 0.25,
            texel_density: 4.0,
            atlas_size: 256,
            view_size: 128,
            fov_deg: 60.0,
            views: 8,
            radius: 30.0,
            elevation_deg: 20.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxScene {
    /// Walls carry a ground-truth atlas painted from [`solid_texture`].
    pub textured: TexturedMesh,
    /// Same geometry with untextured walls.
    pub coarse: TexturedMesh,
    pub layout: AtlasLayout,
    pub cameras: Vec<Camera>,
    pub noise: NoiseField,
}

/// Ortho image of a height field: each pixel colored by the solid texture
/// at its surface point.
pub fn ortho_from_heights(heights: &RasterGrid, noise: &NoiseField) -> Result<RasterGrid> {
    let mut data = Vec::with_capacity(heights.pixel_count() * 3);
    for j in 0..heights.height() {
        for i in 0..heights.width() {
            let [x, y] = heights.pixel_center_world(i as f64, j as f64);
            data.extend_from_slice(&solid_texture(noise, &Vec3::new(x, y, heights.get(i, j, 0))));
        }
    }
    heights.with_data(3, data)
}

/// Paints every slot texel (chart plus gutter) of `layout` from the solid texture.
pub fn paint_atlas(layout: &AtlasLayout, noise: &NoiseField) -> Result<RasterGrid> {
    let a = layout.atlas_size;
    let mut atlas = RasterGrid::image(a, a, 3, vec![0.0; a * a * 3])?;
    let g = GUTTER as i64;
    for c in &layout.charts {
        let [x0, y0, w, h] = c.rect;
        for b in -g..h as i64 + g {
            for t in -g..w as i64 + g {
                let p = c.world_basis.world(layout.texel_density, t as f64, b as f64);
                atlas.pixel_mut((x0 as i64 + t) as usize, (y0 as i64 + b) as usize).copy_from_slice(&solid_texture(noise, &p));
            }
        }
    }
    Ok(atlas)
}

pub fn box_scene(spec: &BoxSceneSpec) -> Result<BoxScene> {
    let noise = NoiseField::new(spec.seed).fork(stream::FACADE as u64);
    let gh = spec.ground_half;
    let mut mesh = TexturedMesh::default();
    push_quad(&mut mesh, [[-gh, -gh, 0.0], [gh, -gh, 0.0], [gh, gh, 0.0], [-gh, gh, 0.0]]);
    push_box(&mut mesh, spec.box_min, spec.box_max);
    // Ortho of the ground and roof.
    let n = (2.0 * gh / spec.ortho_gsd).round() as usize;
    let mut hd = vec![0.0; n * n];
    let heights0 = RasterGrid::from_data(n, n, 1, spec.ortho_gsd, [-gh, gh], hd.clone())?;
    for j in 0..n {
        for i in 0..n {
            let [x, y] = heights0.pixel_center_world(i as f64, j as f64);
            let inside = x > spec.box_min[0] && x < spec.box_max[0] && y > spec.box_min[1] && y < spec.box_max[1];
            if inside {
                hd[j * n + i] = spec.box_max[2];
            }
        }
    }
    let heights = heights0.with_data(1, hd)?;
    let ortho = ortho_from_heights(&heights, &noise)?;
    mesh.textures.push(ortho);
    mesh.reclassify(0.3);
    let ext = 2.0 * gh;
    for f in 0..mesh.faces.len() {
        if mesh.face_class[f] == FaceClass::Horizontal {
            let corners = mesh.corners(f);
            mesh.uv[f] = corners.map(|p| [(p.x + gh) / ext, (gh - p.y) / ext]);
            mesh.material[f] = Some(ORTHO_MATERIAL);
        }
    }
    let coarse = mesh.clone();
    let part = classify_faces(&mesh, 0.3);
    let layout = pack_atlas(&mesh, &part.vertical, spec.texel_density, spec.atlas_size)?;
    let atlas = paint_atlas(&layout, &noise)?;
    let mut textured = mesh;
    crate::bake::assign_chart_uvs(&mut textured, &layout, 1);
    textured.textures.push(atlas);
    textured.validate()?;
    let center = [
        0.5 * (spec.box_min[0] + spec.box_max[0]),
        0.5 * (spec.box_min[1] + spec.box_max[1]),
        0.5 * (spec.box_min[2] + spec.box_max[2]),
    ];
    let traj = Trajectory { center, radius: spec.radius, views: spec.views, elevation_deg: spec.elevation_deg };
    let cameras = circular_trajectory(&traj, Intrinsics::from_fov(spec.view_size, spec.fov_deg))?;
    Ok(BoxScene { textured, coarse, layout, cameras, noise })
}

/// Height-map scenes with known structure for the QA engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QaScene {
    TwoBox,
    LBuilding,
    TerraceTerrain,
    Flat,
    RingOfTowers,
}

impl QaScene {
    pub const ALL: [QaScene; 5] = [QaScene::TwoBox, QaScene::LBuilding, QaScene::TerraceTerrain, QaScene::Flat, QaScene::RingOfTowers];

    pub fn name(&self) -> &'static str {
        match self {
            QaScene::TwoBox => "two-box",
            QaScene::LBuilding => "l-building",
            QaScene::TerraceTerrain => "terrace-terrain",
            QaScene::Flat => "flat",
            QaScene::RingOfTowers => "ring-of-towers",
        }
    }

    pub fn man_made(&self) -> bool {
        matches!(self, QaScene::TwoBox | QaScene::LBuilding | QaScene::RingOfTowers)
    }

    /// 64x64 height map at 1 m/pixel centered on the origin.
    pub fn heights(&self) -> Result<HeightMap> {
        let n = 64usize;
        let mut h = vec![0.0; n * n];
        let mut rect = |x0: usize, y0: usize, x1: usize, y1: usize, v: f64| {
            for y in y0..y1 {
                for x in x0..x1 {
                    h[y * n + x] = v;
                }
            }
        };
        match self {
            QaScene::TwoBox => {
                rect(10, 20, 22, 36, 10.0);
                rect(38, 24, 52, 40, 20.0);
            }
            QaScene::LBuilding => {
                rect(16, 16, 26, 48, 12.0);
                rect(26, 38, 48, 48, 12.0);
            }
            QaScene::TerraceTerrain => {
                for y in 0..n {
                    for x in 0..n {
                        let step = (x / 16) as f64 * 1.5;
                        h[y * n + x] = step + 0.02 * y as f64;
                    }
                }
            }
            QaScene::Flat => {}
            QaScene::RingOfTowers => {
                for k in 0..6 {
                    let a = k as f64 * std::f64::consts::TAU / 6.0;
                    let cx = (32.0 + 20.0 * a.cos()).round() as usize;
                    let cy = (32.0 + 20.0 * a.sin()).round() as usize;
                    rect(cx - 3, cy - 3, cx + 3, cy + 3, 15.0 + 5.0 * k as f64);
                }
            }
        }
        HeightMap::from_raster(RasterGrid::from_data(n, n, 1, 1.0, [-(n as f64) / 2.0, n as f64 / 2.0], h)?)
    }
}

impl std::str::FromStr for QaScene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QaScene::ALL.into_iter().find(|q| q.name() == s).ok_or_else(|| Error::Config(format!("unknown scene `{s}`")))
    }
}

/// Named procedural anchor generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorClass {
    Urban,
    Natural,
}

/// Procedural anchor image: multi-octave value noise in world coordinates,
/// plus a bright block pattern for urban scenes.
pub fn procedural_anchor(class: AnchorClass, seed: u64, size: usize, gsd: f64, origin_px: [i64; 2]) -> Result<RasterGrid> {
    if size == 0 || !(gsd > 0.0) {
        return Err(Error::Contract("anchor needs a positive size and gsd".into()));
    }
    let f = NoiseField::new(seed).fork(stream::ANCHOR as u64);
    let base = match class {
        AnchorClass::Urban => [0.42, 0.42, 0.40],
        AnchorClass::Natural => [0.30, 0.40, 0.25],
    };
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        let wy = (origin_px[1] + y as i64) as f64;
        for x in 0..size {
            let wx = (origin_px[0] + x as i64) as f64;
            let mut v = 0.0;
            let mut amp = 0.5;
            for (o, spacing) in [32.0, 16.0, 8.0, 4.0].into_iter().enumerate() {
                v += amp * f.value_noise(o as u32, stream::ANCHOR, wx, wy, spacing, 0);
                amp *= 0.5;
            }
            let blocks = match class {
                AnchorClass::Urban => {
                    let cell = f.uniform(10, stream::ANCHOR, (wx / 6.0).floor() as i64, (wy / 6.0).floor() as i64, 0);
                    let street = wx.rem_euclid(6.0) < 1.0 || wy.rem_euclid(6.0) < 1.0;
                    if !street && cell > 0.55 { 0.35 } else { 0.0 }
                }
                AnchorClass::Natural => 0.0,
            };
            for (c, b) in base.iter().enumerate() {
                let tint = 0.05 * f.value_noise(5, stream::ANCHOR, wx, wy, 24.0, 1 + c as u32);
                data.push((b + 0.12 * v + tint + blocks).clamp(0.0, 1.0));
            }
        }
    }
    let anchor = RasterGrid::anchor_for(origin_px, gsd);
    RasterGrid::from_data(size, size, 3, gsd, anchor, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::rasterize;

    #[test]
    fn box_scene_is_consistent() {
        let s = box_scene(&BoxSceneSpec::default()).unwrap();
        assert_eq!(s.layout.charts.len(), 4);
        assert_eq!(s.cameras.len(), 8);
        assert_eq!(s.textured.faces, s.coarse.faces);
        let v = rasterize(&s.textured, &s.cameras[0], [0.0; 3], [0.0; 3]).unwrap();
        let walls = v.lateral_mask.data().iter().filter(|m| **m > 0.5).count();
        assert!(walls > 100, "{walls}");
    }

    #[test]
    fn anchors_are_deterministic_and_windowed() {
        let a = procedural_anchor(AnchorClass::Urban, 3, 32, 64.0, [0, 0]).unwrap();
        let b = procedural_anchor(AnchorClass::Urban, 3, 16, 64.0, [8, 8]).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(a.pixel(x + 8, y + 8), b.pixel(x, y));
            }
        }
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn qa_scene_names_round_trip() {
        for s in QaScene::ALL {
            assert_eq!(s.name().parse::<QaScene>().unwrap(), s);
            assert_eq!(s.heights().unwrap().raster.width(), 64);
        }
    }
}
