//! Pinhole cameras and circular trajectories.
//!
//! Camera space follows the usual computer-vision convention: `x` right,
//! `y` down, `z` forward. A world point `P` maps to camera space as
//! `R P + t`; pixel centers sit at integer image coordinates.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3, WorldFrame};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square image with the given horizontal field of view (degrees) and
    /// the principal point at the image center.
    pub fn from_fov(size: usize, fov_deg: f64) -> Self {
        let f = (size as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
        let c = (size as f64 - 1.0) / 2.0;
        Intrinsics { fx: f, fy: f, cx: c, cy: c, width: size, height: size }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub index: usize,
    pub k: Intrinsics,
    /// Row-major world-to-camera rotation.
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Front { x: f64, y: f64, depth: f64 },
    Behind,
}

impl Camera {
    pub fn rotation(&self) -> Mat3 {
        let r = &self.r;
        Mat3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.t[0], self.t[1], self.t[2])
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation()
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn position(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    /// Builds a camera at `pos` looking at `target` with `z_up` projected as
    /// the image's up direction. Falls back to +y as up for vertical views.
    pub fn look_at(index: usize, k: Intrinsics, pos: Vec3, target: Vec3) -> Result<Self> {
        let f = target - pos;
        if f.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry("camera position coincides with its target".into()));
        }
        let f = f.normalize();
        let mut up = WorldFrame::z_up();
        if f.cross(&up).norm() < 1e-9 {
            up = Vec3::new(0.0, 1.0, 0.0);
        }
        let right = f.cross(&up).normalize();
        let down = f.cross(&right);
        let rot = Mat3::from_rows(&[right.transpose(), down.transpose(), f.transpose()]);
        let t = -(rot * pos);
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = rot[(i, j)];
            }
        }
        Ok(Camera { index, k, r, t: [t[0], t[1], t[2]] })
    }
}

/// Pinhole projection: `s (x, y, 1)^T = K (R P + t)`, depth = camera-space z.
pub fn project_point(p: &Vec3, cam: &Camera) -> Projection {
    let c = cam.to_camera(p);
    if !(c.z > 0.0) {
        return Projection::Behind;
    }
    Projection::Front { x: cam.k.fx * c.x / c.z + cam.k.cx, y: cam.k.fy * c.y / c.z + cam.k.cy, depth: c.z }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trajectory {
    pub center: [f64; 3],
    pub radius: f64,
    pub views: usize,
    pub elevation_deg: f64,
}

/// Cameras on a horizontal circle around `center`, view `i` at azimuth
/// `i * 360 / N` degrees (measured from +x toward +y), all looking at the center.
pub fn circular_trajectory(traj: &Trajectory, k: Intrinsics) -> Result<Vec<Camera>> {
    if !(traj.radius > 0.0) {
        return Err(Error::DegenerateGeometry("trajectory radius must be positive".into()));
    }
    if traj.views == 0 {
        return Err(Error::Contract("trajectory needs at least one view".into()));
    }
    let c = Vec3::new(traj.center[0], traj.center[1], traj.center[2]);
    let el = traj.elevation_deg.to_radians();
    (0..traj.views)
        .map(|i| {
            let az = (i as f64 * 360.0 / traj.views as f64).to_radians();
            let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Camera::look_at(i, k, c + dir * traj.radius, c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics { fx: 100.0, fy: 100.0, cx: 64.0, cy: 64.0, width: 128, height: 128 }
    }

    fn identity_cam() -> Camera {
        Camera { index: 0, k: k(), r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], t: [0.0; 3] }
    }

    #[test]
    fn projection_examples() {
        let c = identity_cam();
        assert_eq!(project_point(&Vec3::new(0.0, 0.0, 5.0), &c), Projection::Front { x: 64.0, y: 64.0, depth: 5.0 });
        assert_eq!(project_point(&Vec3::new(1.0, 0.0, 5.0), &c), Projection::Front { x: 84.0, y: 64.0, depth: 5.0 });
        assert_eq!(project_point(&Vec3::new(0.0, 0.0, -1.0), &c), Projection::Behind);
    }

    #[test]
    fn ring_geometry() {
        let t = Trajectory { center: [1.0, 2.0, 3.0], radius: 10.0, views: 8, elevation_deg: 30.0 };
        let cams = circular_trajectory(&t, k()).unwrap();
        let c = Vec3::new(1.0, 2.0, 3.0);
        for cam in &cams {
            let r = cam.rotation();
            assert!((r.determinant() - 1.0).abs() < 1e-9);
            assert!((r * r.transpose() - Mat3::identity()).norm() < 1e-12);
            assert!(((cam.position() - c).norm() - 10.0).abs() < 1e-9);
            // center projects to the principal point
            match project_point(&c, cam) {
                Projection::Front { x, y, .. } => assert!((x - 64.0).abs() < 1e-9 && (y - 64.0).abs() < 1e-9),
                Projection::Behind => panic!(),
            }
        }
        for w in cams.windows(2) {
            let a = w[0].position() - c;
            let b = w[1].position() - c;
            let ang = (a.x * b.y - a.y * b.x).atan2(a.x * b.x + a.y * b.y).to_degrees();
            assert!((ang - 45.0).abs() < 1e-9);
        }
    }

    #[test]
    fn opposite_view_is_reflected() {
        let t = Trajectory { center: [5.0, -3.0, 0.0], radius: 4.0, views: 4, elevation_deg: 20.0 };
        let cams = circular_trajectory(&t, k()).unwrap();
        let p0 = cams[0].position();
        let p2 = cams[2].position();
        assert!((p2.x - (10.0 - p0.x)).abs() < 1e-9);
        assert!((p2.y - (-6.0 - p0.y)).abs() < 1e-9);
        assert!((p2.z - p0.z).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let t = Trajectory { center: [0.0; 3], radius: 0.0, views: 1, elevation_deg: 30.0 };
        assert!(circular_trajectory(&t, k()).is_err());
        assert!(Camera::look_at(0, k(), Vec3::zeros(), Vec3::zeros()).is_err());
        // straight down still yields a valid rotation
        let c = Camera::look_at(0, k(), Vec3::new(0.0, 0.0, 10.0), Vec3::zeros()).unwrap();
        assert!((c.rotation().determinant() - 1.0).abs() < 1e-12);
    }
}
