//! Explicit textured triangle meshes.

use crate::error::{Error, Result};
use crate::geom::{face_normal, Vec3, WorldFrame};
use crate::grid::RasterGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceClass {
    Vertical,
    Horizontal,
}

/// Texture slot conventionally holding the orthographic image.
pub const ORTHO_MATERIAL: u32 = 0;
/// Texture slot conventionally holding the baked lateral atlas.
pub const ATLAS_MATERIAL: u32 = 1;

/// Triangle mesh in world meters (z up) with per-face-corner UVs.
///
/// UVs follow image orientation: `u` grows to the right, `v` grows downward,
/// and `(u, v)` maps to continuous texel coordinate `(u W - 0.5, v H - 0.5)`.
/// A face whose material is `None` is untextured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TexturedMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub face_class: Vec<FaceClass>,
    pub uv: Vec<[[f64; 2]; 3]>,
    pub material: Vec<Option<u32>>,
    pub textures: Vec<RasterGrid>,
}

impl TexturedMesh {
    pub fn validate(&self) -> Result<()> {
        let n = self.faces.len();
        if self.face_class.len() != n || self.uv.len() != n || self.material.len() != n {
            return Err(Error::Contract("per-face arrays must match the face count".into()));
        }
        let nv = self.vertices.len() as u32;
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|i| *i >= nv)) {
            return Err(Error::Contract(format!("face {f:?} references a vertex beyond {nv}")));
        }
        if let Some(m) = self.material.iter().flatten().find(|m| **m as usize >= self.textures.len()) {
            return Err(Error::Contract(format!("material {m} has no texture")));
        }
        Ok(())
    }

    pub fn vertex(&self, i: u32) -> Vec3 {
        let v = self.vertices[i as usize];
        Vec3::new(v[0], v[1], v[2])
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertex(a), self.vertex(b), self.vertex(c)]
    }

    pub fn normal(&self, f: usize) -> Result<Vec3> {
        let [a, b, c] = self.corners(f);
        face_normal(&a, &b, &c)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Sets every face's class from its normal: vertical iff `|n . z_up| < tau`.
    /// Degenerate faces become horizontal.
    pub fn reclassify(&mut self, tau: f64) {
        self.face_class = (0..self.faces.len())
            .map(|f| match self.normal(f) {
                Ok(n) if n.dot(&WorldFrame::z_up()).abs() < tau => FaceClass::Vertical,
                _ => FaceClass::Horizontal,
            })
            .collect();
    }

    /// Texture color of face `f` at barycentric `(b0, b1, b2)`, or `None`
    /// for untextured faces.
    pub fn shade(&self, f: usize, bary: [f64; 3], out: &mut [f64]) -> bool {
        let Some(m) = self.material[f] else { return false };
        let tex = &self.textures[m as usize];
        let uv = &self.uv[f];
        let u = bary[0] * uv[0][0] + bary[1] * uv[1][0] + bary[2] * uv[2][0];
        let v = bary[0] * uv[0][1] + bary[1] * uv[1][1] + bary[2] * uv[2][1];
        tex.sample_clamped(u * tex.width() as f64 - 0.5, v * tex.height() as f64 - 0.5, out);
        true
    }
}

/// Axis-aligned box mesh: 4 walls and a roof, outward winding, no floor.
/// Returns the faces appended to `mesh` as a range.
pub fn push_box(mesh: &mut TexturedMesh, min: [f64; 3], max: [f64; 3]) -> std::ops::Range<usize> {
    let start = mesh.faces.len();
    let [x0, y0, z0] = min;
    let [x1, y1, z1] = max;
    let quads: [[[f64; 3]; 4]; 5] = [
        // south wall (-y), seen from outside: counter-clockwise
        [[x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1]],
        // east wall (+x)
        [[x1, y0, z0], [x1, y1, z0], [x1, y1, z1], [x1, y0, z1]],
        // north wall (+y)
        [[x1, y1, z0], [x0, y1, z0], [x0, y1, z1], [x1, y1, z1]],
        // west wall (-x)
        [[x0, y1, z0], [x0, y0, z0], [x0, y0, z1], [x0, y1, z1]],
        // roof
        [[x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]],
    ];
    for q in quads {
        push_quad(mesh, q);
    }
    start..mesh.faces.len()
}

/// Appends a planar quad as two triangles `(0,1,2)` and `(0,2,3)`; untextured,
/// classified horizontal until [`TexturedMesh::reclassify`] runs.
pub fn push_quad(mesh: &mut TexturedMesh, q: [[f64; 3]; 4]) {
    let base = mesh.vertices.len() as u32;
    mesh.vertices.extend_from_slice(&q);
    for tri in [[0, 1, 2], [0, 2, 3]] {
        mesh.faces.push([base + tri[0], base + tri[1], base + tri[2]]);
        mesh.face_class.push(FaceClass::Horizontal);
        mesh.uv.push([[0.0; 2]; 3]);
        mesh.material.push(None);
    }
}

impl Default for TexturedMesh {
    fn default() -> Self {
        TexturedMesh {
            vertices: Vec::new(),
            faces: Vec::new(),
            face_class: Vec::new(),
            uv: Vec::new(),
            material: Vec::new(),
            textures: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_faces_point_outward() {
        let mut m = TexturedMesh::default();
        push_box(&mut m, [0.0, 0.0, 0.0], [2.0, 3.0, 4.0]);
        m.validate().unwrap();
        let want = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for (q, w) in want.iter().enumerate() {
            for f in [2 * q, 2 * q + 1] {
                let n = m.normal(f).unwrap();
                assert!((n - Vec3::new(w[0], w[1], w[2])).norm() < 1e-12, "face {f}: {n:?}");
            }
        }
        m.reclassify(0.3);
        assert_eq!(m.face_class.iter().filter(|c| **c == FaceClass::Vertical).count(), 8);
    }

    #[test]
    fn validate_catches_bad_indices() {
        let mut m = TexturedMesh::default();
        push_quad(&mut m, [[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
        m.faces[0][2] = 9;
        assert!(m.validate().is_err());
    }
}
