//! Deterministic software rasterizer.
//!
//! Triangles are clipped against a near plane, projected, and scanned with
//! edge functions at integer pixel centers. A pixel exactly on an edge shared
//! by two triangles goes to exactly one of them (top-left style rule).
//! Depth ties keep the lower face index. Shading is deferred: the depth pass
//! records face id and perspective-correct barycentrics, then textures are
//! sampled once per pixel.

use crate::camera::Camera;
use crate::error::Result;
use crate::geom::Vec3;
use crate::grid::RasterGrid;
use crate::mesh::{FaceClass, TexturedMesh};
use rayon::prelude::*;

pub const NEAR: f64 = 1e-3;
pub const NO_FACE: u32 = u32::MAX;
const BAND: usize = 16;

/// Rendered view: color, camera-space depth (`+inf` where empty), lateral
/// mask (1 where the front-most face is vertical) and front-most face ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: Camera,
    pub rgb: RasterGrid,
    pub depth: RasterGrid,
    pub lateral_mask: RasterGrid,
    pub face_id: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
    /// Barycentric coordinates w.r.t. the original (unclipped) face.
    bary: [f64; 3],
}

#[derive(Debug, Clone)]
struct ScreenTri {
    face: u32,
    v: [ScreenVertex; 3],
    area: f64,
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Clone, Copy)]
struct Fragment {
    depth: f64,
    face: u32,
    bary: [f64; 3],
}

fn edge(a: &ScreenVertex, b: &ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Tie rule for pixels exactly on an edge. For any edge the two opposite
/// directions give opposite answers, so shared edges are drawn once.
fn owns_edge(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

fn clip_near(poly: &[(Vec3, [f64; 3])]) -> Vec<(Vec3, [f64; 3])> {
    let mut out = Vec::with_capacity(4);
    for i in 0..poly.len() {
        let (a, ba) = poly[i];
        let (b, bb) = poly[(i + 1) % poly.len()];
        let ina = a.z >= NEAR;
        let inb = b.z >= NEAR;
        if ina {
            out.push((a, ba));
        }
        if ina != inb {
            let s = (NEAR - a.z) / (b.z - a.z);
            let p = a + (b - a) * s;
            let bary = [ba[0] + (bb[0] - ba[0]) * s, ba[1] + (bb[1] - ba[1]) * s, ba[2] + (bb[2] - ba[2]) * s];
            out.push((Vec3::new(p.x, p.y, NEAR), bary));
        }
    }
    out
}

fn setup(mesh: &TexturedMesh, cam: &Camera) -> Vec<ScreenTri> {
    let rot = cam.rotation();
    let t = cam.translation();
    let cv: Vec<Vec3> = mesh.vertices.iter().map(|v| rot * Vec3::new(v[0], v[1], v[2]) + t).collect();
    let k = &cam.k;
    let (w, h) = (k.width as f64, k.height as f64);
    let mut tris = Vec::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        let p = [cv[f[0] as usize], cv[f[1] as usize], cv[f[2] as usize]];
        if p.iter().all(|v| v.z < NEAR) {
            continue;
        }
        let poly = [(p[0], [1.0, 0.0, 0.0]), (p[1], [0.0, 1.0, 0.0]), (p[2], [0.0, 0.0, 1.0])];
        let clipped = if p.iter().all(|v| v.z >= NEAR) { poly.to_vec() } else { clip_near(&poly) };
        let sv: Vec<ScreenVertex> = clipped
            .iter()
            .map(|(c, bary)| ScreenVertex {
                x: k.fx * c.x / c.z + k.cx,
                y: k.fy * c.y / c.z + k.cy,
                inv_z: 1.0 / c.z,
                bary: *bary,
            })
            .collect();
        for i in 1..sv.len().saturating_sub(1) {
            let mut v = [sv[0], sv[i], sv[i + 1]];
            let mut area = edge(&v[0], &v[1], v[2].x, v[2].y);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            if area < 0.0 {
                v.swap(1, 2);
                area = -area;
            }
            let min = [v.iter().map(|s| s.x).fold(f64::INFINITY, f64::min), v.iter().map(|s| s.y).fold(f64::INFINITY, f64::min)];
            let max = [
                v.iter().map(|s| s.x).fold(f64::NEG_INFINITY, f64::max),
                v.iter().map(|s| s.y).fold(f64::NEG_INFINITY, f64::max),
            ];
            if max[0] < 0.0 || max[1] < 0.0 || min[0] > w - 1.0 || min[1] > h - 1.0 {
                continue;
            }
            tris.push(ScreenTri { face: fi as u32, v, area, min, max });
        }
    }
    tris
}

fn raster_band(tris: &[ScreenTri], width: usize, y0: usize, y1: usize) -> Vec<Option<Fragment>> {
    let mut buf: Vec<Option<Fragment>> = vec![None; width * (y1 - y0)];
    for tri in tris {
        let ys = tri.min[1].ceil().max(y0 as f64) as i64;
        let ye = tri.max[1].floor().min((y1 - 1) as f64) as i64;
        if ys > ye {
            continue;
        }
        let xs = tri.min[0].ceil().max(0.0) as i64;
        let xe = tri.max[0].floor().min((width - 1) as f64) as i64;
        let [a, b, c] = &tri.v;
        let own = [owns_edge(b, c), owns_edge(c, a), owns_edge(a, b)];
        for py in ys..=ye {
            for px in xs..=xe {
                let (fx, fy) = (px as f64, py as f64);
                let w = [edge(b, c, fx, fy), edge(c, a, fx, fy), edge(a, b, fx, fy)];
                if (0..3).any(|i| w[i] < 0.0 || (w[i] == 0.0 && !own[i])) {
                    continue;
                }
                let l = [w[0] / tri.area, w[1] / tri.area, w[2] / tri.area];
                let inv = l[0] * a.inv_z + l[1] * b.inv_z + l[2] * c.inv_z;
                if !(inv > 0.0) {
                    continue;
                }
                let depth = 1.0 / inv;
                let slot = &mut buf[(py as usize - y0) * width + px as usize];
                if slot.map_or(true, |f| depth < f.depth) {
                    let pw = [l[0] * a.inv_z / inv, l[1] * b.inv_z / inv, l[2] * c.inv_z / inv];
                    let mut bary = [0.0; 3];
                    for (k, bk) in bary.iter_mut().enumerate() {
                        *bk = pw[0] * a.bary[k] + pw[1] * b.bary[k] + pw[2] * c.bary[k];
                    }
                    *slot = Some(Fragment { depth, face: tri.face, bary });
                }
            }
        }
    }
    buf
}

/// Renders `mesh` from `cam`. Untextured faces get `fill`; empty pixels get
/// `background`.
pub fn rasterize(mesh: &TexturedMesh, cam: &Camera, fill: [f64; 3], background: [f64; 3]) -> Result<CameraView> {
    mesh.validate()?;
    let (w, h) = (cam.k.width, cam.k.height);
    let tris = setup(mesh, cam);
    let bands: Vec<Vec<Option<Fragment>>> = (0..h.div_ceil(BAND))
        .into_par_iter()
        .map(|b| raster_band(&tris, w, b * BAND, ((b + 1) * BAND).min(h)))
        .collect();
    let frags: Vec<Option<Fragment>> = bands.into_iter().flatten().collect();
    let mut rgb = vec![0.0; w * h * 3];
    let mut depth = vec![f64::INFINITY; w * h];
    let mut mask = vec![0.0; w * h];
    let mut face_id = vec![NO_FACE; w * h];
    let mut px = [0.0; 3];
    for (i, fr) in frags.iter().enumerate() {
        let out = &mut rgb[i * 3..i * 3 + 3];
        match fr {
            None => out.copy_from_slice(&background),
            Some(f) => {
                depth[i] = f.depth;
                face_id[i] = f.face;
                if mesh.face_class[f.face as usize] == FaceClass::Vertical {
                    mask[i] = 1.0;
                }
                if mesh.shade(f.face as usize, f.bary, &mut px) {
                    out.copy_from_slice(&px[..3]);
                } else {
                    out.copy_from_slice(&fill);
                }
            }
        }
    }
    Ok(CameraView {
        camera: cam.clone(),
        rgb: RasterGrid::image(w, h, 3, rgb)?,
        depth: RasterGrid::image(w, h, 1, depth)?,
        lateral_mask: RasterGrid::image(w, h, 1, mask)?,
        face_id,
    })
}
