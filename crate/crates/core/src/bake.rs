//! Texture back-projection onto vertical faces.
//!
//! Vertical faces are grouped into coplanar, edge-connected charts, each
//! chart gets an axis-aligned rectangle in the atlas, and every atlas texel
//! is mapped back to its world point and colored from the most perpendicular
//! view that sees it.

use crate::camera::{project_point, Projection};
use crate::error::{Error, Result};
use crate::geom::{Vec3, WorldFrame};
use crate::grid::RasterGrid;
use crate::mesh::{FaceClass, TexturedMesh};
use crate::render::{CameraView, NO_FACE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const GUTTER: usize = 2;
/// Share of the atlas area that charts (with gutters) may occupy.
pub const MAX_FILL: f64 = 0.9;
/// Color of charts that no view sees at all.
pub const UNSEEN_FILL: [f64; 3] = [0.5, 0.5, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BakeConfig {
    pub tau: f64,
    pub atlas_size: usize,
    pub texel_density: f64,
    /// Defaults to half a texel.
    pub depth_epsilon: Option<f64>,
    /// Views with `n . d_view` below this are not used.
    pub min_cosine: f64,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig { tau: 0.3, atlas_size: 1024, texel_density: 4.0, depth_epsilon: None, min_cosine: 0.0 }
    }
}

impl BakeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !self.atlas_size.is_power_of_two() {
            return Err(Error::Config(format!("atlas size {} is not a power of two", self.atlas_size)));
        }
        if !(self.texel_density > 0.0) {
            return Err(Error::Config("texel density must be positive".into()));
        }
        if !(self.epsilon() > 0.0) {
            return Err(Error::Config("depth epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.depth_epsilon.unwrap_or(0.5 / self.texel_density)
    }
}

/// Face partition; degenerate faces land in `horizontal` and are listed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FacePartition {
    pub vertical: Vec<usize>,
    pub horizontal: Vec<usize>,
    pub degenerate: Vec<usize>,
}

pub fn classify_faces(mesh: &TexturedMesh, tau: f64) -> FacePartition {
    let mut p = FacePartition::default();
    for f in 0..mesh.faces.len() {
        match mesh.normal(f) {
            Ok(n) if n.dot(&WorldFrame::z_up()).abs() < tau => p.vertical.push(f),
            Ok(_) => p.horizontal.push(f),
            Err(_) => {
                p.degenerate.push(f);
                p.horizontal.push(f);
            }
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    pub fn n(&self) -> Vec3 {
        Vec3::new(self.normal[0], self.normal[1], self.normal[2])
    }

    pub fn same_as(&self, o: &Plane) -> bool {
        self.n().dot(&o.n()) > 1.0 - 1e-9 && (self.offset - o.offset).abs() < 1e-6
    }
}

pub fn face_plane(mesh: &TexturedMesh, f: usize) -> Option<Plane> {
    let n = mesh.normal(f).ok()?;
    let p = mesh.vertex(mesh.faces[f][0]);
    Some(Plane { normal: [n.x, n.y, n.z], offset: n.dot(&p) })
}

/// Chart-local frame: `P = origin + s e_u + r e_v`, texel `(a, b)` centered
/// at `s = s_min + (a + 0.5) / density`, `r = r_max - (b + 0.5) / density`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChartBasis {
    pub origin: [f64; 3],
    pub e_u: [f64; 3],
    pub e_v: [f64; 3],
    pub s_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Chart {
    pub face_ids: Vec<usize>,
    pub plane: Plane,
    /// Chart texels (without gutter): `[x, y, width, height]`.
    pub rect: [usize; 4],
    pub uv_rect: [f64; 4],
    pub world_basis: ChartBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AtlasLayout {
    pub atlas_size: usize,
    pub texel_density: f64,
    pub charts: Vec<Chart>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ChartBasis {
    pub fn world(&self, density: f64, a: f64, b: f64) -> Vec3 {
        let s = self.s_min + (a + 0.5) / density;
        let r = self.r_max - (b + 0.5) / density;
        v3(self.origin) + v3(self.e_u) * s + v3(self.e_v) * r
    }

    /// Continuous texel-edge coordinates of a world point.
    pub fn texel_coords(&self, density: f64, p: &Vec3) -> [f64; 2] {
        let d = p - v3(self.origin);
        [(d.dot(&v3(self.e_u)) - self.s_min) * density, (self.r_max - d.dot(&v3(self.e_v))) * density]
    }
}

/// Groups faces into coplanar charts connected through shared edges.
fn group_charts(mesh: &TexturedMesh, faces: &[usize]) -> Vec<(Vec<usize>, Plane)> {
    use std::collections::HashMap;
    let planes: Vec<Option<Plane>> = faces.iter().map(|f| face_plane(mesh, *f)).collect();
    let mut parent: Vec<usize> = (0..faces.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut edges: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (k, f) in faces.iter().enumerate() {
        let v = mesh.faces[*f];
        for e in 0..3 {
            let (a, b) = (v[e], v[(e + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(k);
        }
    }
    let mut keys: Vec<_> = edges.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let list = &edges[&key];
        for i in 1..list.len() {
            let (a, b) = (list[0], list[i]);
            if let (Some(pa), Some(pb)) = (&planes[a], &planes[b]) {
                if pa.same_as(pb) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); faces.len()];
    for k in 0..faces.len() {
        if planes[k].is_some() {
            let r = find(&mut parent, k);
            groups[r].push(k);
        }
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let plane = planes[g[0]].unwrap();
            (g.into_iter().map(|k| faces[k]).collect(), plane)
        })
        .collect()
}

fn chart_basis(mesh: &TexturedMesh, faces: &[usize], plane: &Plane, density: f64) -> (ChartBasis, usize, usize) {
    let n = plane.n();
    let mut e_u = WorldFrame::z_up().cross(&n);
    if e_u.norm() < 1e-9 {
        e_u = Vec3::new(1.0, 0.0, 0.0);
    }
    let e_u = e_u.normalize();
    let e_v = n.cross(&e_u).normalize();
    let origin = mesh.vertex(mesh.faces[faces[0]][0]);
    let (mut smin, mut smax, mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for f in faces {
        for p in mesh.corners(*f) {
            let d = p - origin;
            let (s, r) = (d.dot(&e_u), d.dot(&e_v));
            smin = smin.min(s);
            smax = smax.max(s);
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
    }
    let size = |span: f64| (((span * density) - 1e-9).ceil() as usize).max(1);
    let basis = ChartBasis { origin: arr(origin), e_u: arr(e_u), e_v: arr(e_v), s_min: smin, r_max: rmax };
    (basis, size(smax - smin), size(rmax - rmin))
}

/// Shelf placement of `(width, height)` slots; `None` if they do not fit.
fn shelf_pack(sizes: &[(usize, usize)], order: &[usize], atlas: usize) -> Option<Vec<[usize; 2]>> {
    let mut pos = vec![[0, 0]; sizes.len()];
    let (mut x, mut y, mut shelf) = (0, 0, 0);
    for &i in order {
        let (w, h) = sizes[i];
        if w > atlas {
            return None;
        }
        if x + w > atlas {
            y += shelf;
            x = 0;
            shelf = 0;
        }
        if y + h > atlas {
            return None;
        }
        pos[i] = [x, y];
        x += w;
        shelf = shelf.max(h);
    }
    Some(pos)
}

/// Axis-aligned charts for the given vertical faces, shelf packed with
/// gutters of [`GUTTER`] texels.
pub fn pack_atlas(mesh: &TexturedMesh, vertical: &[usize], density: f64, atlas_size: usize) -> Result<AtlasLayout> {
    if !(density > 0.0) || atlas_size == 0 {
        return Err(Error::Config("atlas needs positive density and size".into()));
    }
    let groups = group_charts(mesh, vertical);
    let mut protos = Vec::with_capacity(groups.len());
    for (faces, plane) in groups {
        let (basis, w, h) = chart_basis(mesh, &faces, &plane, density);
        protos.push((faces, plane, basis, w, h));
    }
    let slots: Vec<(usize, usize)> = protos.iter().map(|p| (p.3 + 2 * GUTTER, p.4 + 2 * GUTTER)).collect();
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.sort_by(|a, b| slots[*b].1.cmp(&slots[*a].1).then(slots[*b].0.cmp(&slots[*a].0)).then(a.cmp(b)));
    let area: usize = slots.iter().map(|(w, h)| w * h).sum();
    let fits = |size: usize| area as f64 <= MAX_FILL * (size * size) as f64 && shelf_pack(&slots, &order, size).is_some();
    if !fits(atlas_size) {
        let mut hint = atlas_size.max(1).next_power_of_two();
        while !fits(hint) && hint < (1 << 20) {
            hint *= 2;
        }
        return Err(Error::AtlasCapacity {
            required: area,
            allowed: (MAX_FILL * (atlas_size * atlas_size) as f64) as usize,
            atlas_size,
            suggested_size: hint,
        });
    }
    let pos = shelf_pack(&slots, &order, atlas_size).expect("checked above");
    let a = atlas_size as f64;
    let charts = protos
        .into_iter()
        .zip(pos)
        .map(|((face_ids, plane, world_basis, w, h), [x, y])| {
            let (cx, cy) = (x + GUTTER, y + GUTTER);
            Chart {
                face_ids,
                plane,
                rect: [cx, cy, w, h],
                uv_rect: [cx as f64 / a, cy as f64 / a, (cx + w) as f64 / a, (cy + h) as f64 / a],
                world_basis,
            }
        })
        .collect();
    Ok(AtlasLayout { atlas_size, texel_density: density, charts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TexelStatus {
    Baked,
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TexelRecord {
    pub atlas: [usize; 2],
    pub world: [f64; 3],
    pub chart: usize,
    pub normal: [f64; 3],
    pub view: Option<usize>,
    pub source: Option<[f64; 2]>,
    pub status: TexelStatus,
}

/// Everything view selection needs besides the point itself.
pub struct Visibility<'a> {
    pub views: &'a [CameraView],
    /// Plane of every mesh face (`None` for degenerate faces).
    pub face_planes: Vec<Option<Plane>>,
    pub epsilon: f64,
    pub min_cosine: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub view: usize,
    pub x: f64,
    pub y: f64,
    pub cosine: f64,
}

impl<'a> Visibility<'a> {
    pub fn new(mesh: &TexturedMesh, views: &'a [CameraView], epsilon: f64, min_cosine: f64) -> Self {
        let face_planes = (0..mesh.faces.len()).map(|f| face_plane(mesh, f)).collect();
        Visibility { views, face_planes, epsilon, min_cosine }
    }

    /// Depth-buffer value used for the visibility test of a point on plane
    /// `own` projecting to `(x, y)`: the minimum depth over the pixels
    /// bilinear interpolation would read, ignoring pixels whose front face
    /// lies on `own` itself.
    pub fn buffer_depth(&self, k: usize, x: f64, y: f64, own: Option<&Plane>) -> f64 {
        let v = &self.views[k];
        let (w, h) = (v.depth.width(), v.depth.height());
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let xs = if x > x0 as f64 && x0 + 1 < w { vec![x0, x0 + 1] } else { vec![x0] };
        let ys = if y > y0 as f64 && y0 + 1 < h { vec![y0, y0 + 1] } else { vec![y0] };
        let mut d = f64::INFINITY;
        for &py in &ys {
            for &px in &xs {
                let f = v.face_id[py * w + px];
                if f == NO_FACE {
                    continue;
                }
                if let (Some(own), Some(Some(fp))) = (own, self.face_planes.get(f as usize)) {
                    if own.same_as(fp) {
                        continue;
                    }
                }
                d = d.min(v.depth.get(px, py, 0));
            }
        }
        d
    }

    /// `Some((x, y, depth))` if view `k` sees `p`.
    pub fn visible(&self, k: usize, p: &Vec3, own: Option<&Plane>) -> Option<(f64, f64, f64)> {
        let v = &self.views[k];
        let Projection::Front { x, y, depth } = project_point(p, &v.camera) else { return None };
        let (w, h) = (v.rgb.width() as f64, v.rgb.height() as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
            return None;
        }
        (depth <= self.buffer_depth(k, x, y, own) + self.epsilon).then_some((x, y, depth))
    }

    /// Most perpendicular visible view; ties go to the lower index.
    pub fn select_view(&self, p: &Vec3, n: &Vec3, own: Option<&Plane>) -> Option<Selection> {
        let mut best: Option<Selection> = None;
        for k in 0..self.views.len() {
            let Some((x, y, _)) = self.visible(k, p, own) else { continue };
            let d = (self.views[k].camera.position() - p).normalize();
            let cosine = n.dot(&d);
            if cosine < self.min_cosine {
                continue;
            }
            if best.is_none_or(|b| cosine > b.cosine) {
                best = Some(Selection { view: k, x, y, cosine });
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct BakeResult {
    pub mesh: TexturedMesh,
    pub layout: AtlasLayout,
    pub atlas: RasterGrid,
    pub records: Vec<TexelRecord>,
    pub unseen_fraction: f64,
    pub degenerate_faces: Vec<usize>,
}

struct ChartBake {
    /// Slot texels (chart plus gutter), row-major, RGB.
    colors: Vec<f64>,
    records: Vec<TexelRecord>,
    unseen: usize,
}

fn bake_chart(ci: usize, chart: &Chart, density: f64, vis: &Visibility) -> ChartBake {
    let [_, _, w, h] = chart.rect;
    let (sw, sh) = (w + 2 * GUTTER, h + 2 * GUTTER);
    let g = GUTTER as f64;
    let n = chart.plane.n();
    let mut colors = vec![0.0; sw * sh * 3];
    let mut known = vec![false; sw * sh];
    let mut records = Vec::with_capacity(w * h);
    let mut unseen = 0;
    let mut px = [0.0; 3];
    for b in 0..sh {
        for a in 0..sw {
            let (ta, tb) = (a as f64 - g, b as f64 - g);
            let p = chart.world_basis.world(density, ta, tb);
            let sel = vis.select_view(&p, &n, Some(&chart.plane));
            if let Some(s) = sel {
                vis.views[s.view].rgb.sample_clamped(s.x, s.y, &mut px);
                colors[(b * sw + a) * 3..(b * sw + a) * 3 + 3].copy_from_slice(&px);
                known[b * sw + a] = true;
            }
            let interior = a >= GUTTER && b >= GUTTER && a < GUTTER + w && b < GUTTER + h;
            if interior {
                if sel.is_none() {
                    unseen += 1;
                }
                records.push(TexelRecord {
                    atlas: [chart.rect[0] + a - GUTTER, chart.rect[1] + b - GUTTER],
                    world: arr(p),
                    chart: ci,
                    normal: chart.plane.normal,
                    view: sel.map(|s| s.view),
                    source: sel.map(|s| [s.x, s.y]),
                    status: if sel.is_some() { TexelStatus::Baked } else { TexelStatus::Unseen },
                });
            }
        }
    }
    diffuse_fill(&mut colors, &mut known, sw, sh);
    ChartBake { colors, records, unseen }
}

/// Fills unknown texels ring by ring with the mean of their known
/// 4-neighbors; a slot with nothing known gets [`UNSEEN_FILL`].
pub fn diffuse_fill(colors: &mut [f64], known: &mut [bool], w: usize, h: usize) {
    if !known.iter().any(|k| *k) {
        for c in colors.chunks_mut(3) {
            c.copy_from_slice(&UNSEEN_FILL);
        }
        known.iter_mut().for_each(|k| *k = true);
        return;
    }
    loop {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if known[y * w + x] {
                    continue;
                }
                let mut sum = [0.0; 3];
                let mut cnt = 0;
                let nb = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
                for (nx, ny) in nb {
                    if nx < w && ny < h && known[ny * w + nx] {
                        for c in 0..3 {
                            sum[c] += colors[(ny * w + nx) * 3 + c];
                        }
                        cnt += 1;
                    }
                }
                if cnt > 0 {
                    updates.push((y * w + x, sum.map(|s| s / cnt as f64)));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, c) in updates {
            colors[i * 3..i * 3 + 3].copy_from_slice(&c);
            known[i] = true;
        }
    }
}

/// Points every chart face at texture `slot` with UVs from its chart frame.
pub fn assign_chart_uvs(mesh: &mut TexturedMesh, layout: &AtlasLayout, slot: u32) {
    let a = layout.atlas_size as f64;
    for chart in &layout.charts {
        for &f in &chart.face_ids {
            let corners = mesh.corners(f);
            let mut uv = [[0.0; 2]; 3];
            for (k, p) in corners.iter().enumerate() {
                let [s, r] = chart.world_basis.texel_coords(layout.texel_density, p);
                uv[k] = [(chart.rect[0] as f64 + s) / a, (chart.rect[1] as f64 + r) / a];
            }
            mesh.uv[f] = uv;
            mesh.material[f] = Some(slot);
        }
    }
}

/// Textured copy of `mesh`: chart faces become vertical and sample `atlas`
/// (appended as the last texture), every other face is horizontal.
pub fn apply_atlas(mesh: &TexturedMesh, layout: &AtlasLayout, atlas: RasterGrid) -> TexturedMesh {
    let mut out = mesh.clone();
    out.face_class = vec![FaceClass::Horizontal; mesh.faces.len()];
    for c in &layout.charts {
        for &f in &c.face_ids {
            out.face_class[f] = FaceClass::Vertical;
        }
    }
    let slot = out.textures.len() as u32;
    assign_chart_uvs(&mut out, layout, slot);
    out.textures.push(atlas);
    out
}

/// Bakes the vertical faces of `mesh` from `views`. The atlas is appended
/// as a new texture; horizontal faces keep their material and UVs.
pub fn bake(mesh: &TexturedMesh, views: &[CameraView], config: &BakeConfig) -> Result<BakeResult> {
    config.validate()?;
    mesh.validate()?;
    let part = classify_faces(mesh, config.tau);
    let layout = pack_atlas(mesh, &part.vertical, config.texel_density, config.atlas_size)?;
    let vis = Visibility::new(mesh, views, config.epsilon(), config.min_cosine);
    let density = config.texel_density;
    let baked: Vec<ChartBake> =
        layout.charts.par_iter().enumerate().map(|(ci, c)| bake_chart(ci, c, density, &vis)).collect();
    let a = config.atlas_size;
    let mut atlas = RasterGrid::image(a, a, 3, vec![0.0; a * a * 3])?;
    let mut records = Vec::new();
    let mut unseen = 0;
    for (chart, cb) in layout.charts.iter().zip(baked) {
        let sw = chart.rect[2] + 2 * GUTTER;
        let (x0, y0) = (chart.rect[0] - GUTTER, chart.rect[1] - GUTTER);
        for (i, c) in cb.colors.chunks(3).enumerate() {
            atlas.pixel_mut(x0 + i % sw, y0 + i / sw).copy_from_slice(c);
        }
        records.extend(cb.records);
        unseen += cb.unseen;
    }
    let out = apply_atlas(mesh, &layout, atlas.clone());
    let total = records.len();
    Ok(BakeResult {
        mesh: out,
        layout,
        atlas,
        records,
        unseen_fraction: if total == 0 { 0.0 } else { unseen as f64 / total as f64 },
        degenerate_faces: part.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{push_box, push_quad};

    fn mesh_with_normal(n: [f64; 3]) -> TexturedMesh {
        let n = v3(n).normalize();
        let a = if n.cross(&Vec3::new(1.0, 0.0, 0.0)).norm() > 0.1 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        let u = n.cross(&a).normalize();
        let v = n.cross(&u);
        let mut m = TexturedMesh::default();
        push_quad(&mut m, [arr(Vec3::zeros()), arr(u), arr(u + v), arr(v)]);
        m
    }

    #[test]
    fn classification_examples() {
        let floor = mesh_with_normal([0.0, 0.0, 1.0]);
        assert_eq!(classify_faces(&floor, 0.3).vertical.len(), 0);
        let wall = mesh_with_normal([1.0, 0.0, 0.0]);
        assert_eq!(classify_faces(&wall, 0.3).vertical.len(), 2);
        let roof = mesh_with_normal([0.0, 1.0, 1.0]);
        assert_eq!(classify_faces(&roof, 0.3).vertical.len(), 0);
        assert_eq!(classify_faces(&roof, 0.8).vertical.len(), 2);
    }

    #[test]
    fn wall_chart_size() {
        let mut m = TexturedMesh::default();
        push_quad(&mut m, [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [10.0, 0.0, 3.0], [0.0, 0.0, 3.0]]);
        let l = pack_atlas(&m, &[0, 1], 4.0, 256).unwrap();
        assert_eq!(l.charts.len(), 1);
        assert_eq!(&l.charts[0].rect[2..], &[40, 12]);
    }

    #[test]
    fn identical_walls_get_disjoint_charts() {
        let mut m = TexturedMesh::default();
        push_quad(&mut m, [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [10.0, 0.0, 3.0], [0.0, 0.0, 3.0]]);
        push_quad(&mut m, [[0.0, 5.0, 0.0], [10.0, 5.0, 0.0], [10.0, 5.0, 3.0], [0.0, 5.0, 3.0]]);
        let l = pack_atlas(&m, &[0, 1, 2, 3], 4.0, 256).unwrap();
        assert_eq!(l.charts.len(), 2);
        let (a, b) = (l.charts[0].rect, l.charts[1].rect);
        assert_eq!(&a[2..], &b[2..]);
        let overlap = a[0] < b[0] + b[2] && b[0] < a[0] + a[2] && a[1] < b[1] + b[3] && b[1] < a[1] + a[3];
        assert!(!overlap);
        assert!(pack_atlas(&m, &[], 4.0, 256).unwrap().charts.is_empty());
    }

    #[test]
    fn capacity_error_hints_a_size() {
        let mut m = TexturedMesh::default();
        push_quad(&mut m, [[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [100.0, 0.0, 30.0], [0.0, 0.0, 30.0]]);
        match pack_atlas(&m, &[0, 1], 4.0, 256) {
            Err(Error::AtlasCapacity { suggested_size, .. }) => assert_eq!(suggested_size, 512),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn box_walls_make_four_charts() {
        let mut m = TexturedMesh::default();
        push_box(&mut m, [0.0, 0.0, 0.0], [4.0, 6.0, 3.0]);
        let part = classify_faces(&m, 0.3);
        assert_eq!(part.vertical.len() + part.horizontal.len(), m.faces.len());
        let l = pack_atlas(&m, &part.vertical, 4.0, 128).unwrap();
        assert_eq!(l.charts.len(), 4);
        for c in &l.charts {
            // texel centers map back onto the chart plane
            let p = c.world_basis.world(4.0, 0.0, 0.0);
            assert!((c.plane.n().dot(&p) - c.plane.offset).abs() < 1e-9);
            let t = c.world_basis.texel_coords(4.0, &p);
            assert!((t[0] - 0.5).abs() < 1e-9 && (t[1] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_views_leave_everything_unseen() {
        let mut m = TexturedMesh::default();
        push_box(&mut m, [0.0, 0.0, 0.0], [4.0, 6.0, 3.0]);
        let r = bake(&m, &[], &BakeConfig { atlas_size: 128, ..BakeConfig::default() }).unwrap();
        assert_eq!(r.unseen_fraction, 1.0);
        assert!(r.records.iter().all(|t| t.status == TexelStatus::Unseen));
        r.mesh.validate().unwrap();
    }

    #[test]
    fn diffusion_fills_from_known_texels() {
        let mut c = vec![0.0; 3 * 3];
        c[0..3].copy_from_slice(&[1.0, 0.5, 0.0]);
        let mut k = vec![true, false, false];
        diffuse_fill(&mut c, &mut k, 3, 1);
        assert_eq!(&c[6..9], &[1.0, 0.5, 0.0]);
        assert!(k.iter().all(|x| *x));
    }
}
