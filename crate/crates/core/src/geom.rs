//! Shared 3D conventions.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Local planar world frame: meters, +z up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldFrame;

impl WorldFrame {
    pub const METERS_PER_UNIT: f64 = 1.0;

    pub fn z_up() -> Vec3 {
        Vec3::new(0.0, 0.0, 1.0)
    }
}

/// Faces with less area than this are treated as degenerate (m²).
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Unit normal of triangle (p0, p1, p2); counter-clockwise seen from the
/// outside yields the outward normal.
pub fn face_normal(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Result<Vec3> {
    let n = (p1 - p0).cross(&(p2 - p0));
    let norm = n.norm();
    if !(0.5 * norm > MIN_FACE_AREA) {
        return Err(Error::DegenerateGeometry(format!(
            "triangle area {:e} m² below {MIN_FACE_AREA:e}",
            0.5 * norm
        )));
    }
    Ok(n / norm)
}

pub fn triangle_area(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> f64 {
    0.5 * (p1 - p0).cross(&(p2 - p0)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn floor_normal_points_up() {
        let n = face_normal(&v(0., 0., 0.), &v(1., 0., 0.), &v(0., 1., 0.)).unwrap();
        assert_eq!(n, v(0., 0., 1.));
    }

    #[test]
    fn winding_flip_negates() {
        let n = face_normal(&v(0., 0., 0.), &v(0., 1., 0.), &v(1., 0., 0.)).unwrap();
        assert_eq!(n, v(0., 0., -1.));
    }

    #[test]
    fn wall_normal() {
        // (1,0,0) x (1,0,1) = (0*1-0*0, 0*1-1*1, 1*0-0*1) = (0,-1,0)
        let n = face_normal(&v(0., 0., 0.), &v(1., 0., 0.), &v(1., 0., 1.)).unwrap();
        assert_eq!(n, v(0., -1., 0.));
    }

    #[test]
    fn collinear_is_degenerate() {
        let r = face_normal(&v(0., 0., 0.), &v(1., 1., 1.), &v(2., 2., 2.));
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
    }

    proptest! {
        #[test]
        fn swapping_vertices_negates_normal(
            a in prop::array::uniform3(-50.0f64..50.0),
            b in prop::array::uniform3(-50.0f64..50.0),
            c in prop::array::uniform3(-50.0f64..50.0),
        ) {
            let (p0, p1, p2) = (v(a[0], a[1], a[2]), v(b[0], b[1], b[2]), v(c[0], c[1], c[2]));
            prop_assume!(triangle_area(&p0, &p1, &p2) > 1e-6);
            let n1 = face_normal(&p0, &p1, &p2).unwrap();
            let n2 = face_normal(&p0, &p2, &p1).unwrap();
            prop_assert!((n1 + n2).amax() <= 1e-12);
            prop_assert!((n1.norm() - 1.0).abs() < 1e-12);
        }
    }
}
