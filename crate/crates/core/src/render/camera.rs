use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{EnsError, Result};
use crate::geometry::Vec3;

/// Points closer to the image plane than this are not projected.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole camera: `p_cam = R p + t`, pixel `u = fx x/z + cx`, `v = fy y/z + cy`.
///
/// Camera axes are x right, y down, z forward. Pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vec3,
    pub width: usize,
    pub height: usize,
}

/// JSON layout of a camera: row-major `K` and `R`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = m[(i, j)];
        }
    }
    out
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        Self {
            k: row_major(&c.k),
            r: row_major(&c.r),
            t: [c.t.x, c.t.y, c.t.z],
            width: c.width,
            height: c.height,
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = EnsError;

    fn try_from(r: CameraRecord) -> Result<Self> {
        Camera::new(
            Matrix3::from_row_slice(&r.k),
            Matrix3::from_row_slice(&r.r),
            Vec3::from(r.t),
            r.width,
            r.height,
        )
    }
}

impl Camera {
    pub fn new(k: Matrix3<f64>, r: Matrix3<f64>, t: Vec3, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(EnsError::Argument("camera resolution must be positive".into()));
        }
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || !(r.determinant() > 0.0) {
            return Err(EnsError::Argument(format!("camera rotation is not orthonormal (error {err:.3e})")));
        }
        let upper = k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0 && k[(2, 2)] == 1.0;
        if !upper || !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(EnsError::Argument("intrinsics must be upper triangular with positive focals".into()));
        }
        if !t.iter().all(|v| v.is_finite()) {
            return Err(EnsError::Argument("camera translation is not finite".into()));
        }
        Ok(Self { k, r, t, width, height })
    }

    pub fn intrinsics(focal: f64, width: usize, height: usize) -> Matrix3<f64> {
        Matrix3::new(focal, 0.0, width as f64 / 2.0, 0.0, focal, height as f64 / 2.0, 0.0, 0.0, 1.0)
    }

    /// Camera at `eye` looking at `target`, with `up` mapped to image-up.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if !(right.norm() > 1e-9) {
            return Err(EnsError::Argument("look_at: up vector is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::new(Self::intrinsics(focal, width, height), r, -(r * eye), width, height)
    }

    pub fn center(&self) -> Vec3 {
        -(self.r.transpose() * self.t)
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.k[(1, 1)]
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.r * p + self.t
    }

    /// Pixel coordinates and camera-frame depth; `None` at or behind the image plane.
    pub fn project(&self, p: &Vec3) -> Option<(Vector2<f64>, f64)> {
        let q = self.to_camera(p);
        if !(q.z > MIN_DEPTH) {
            return None;
        }
        let h = self.k * (q / q.z);
        Some((Vector2::new(h.x, h.y), q.z))
    }

    /// World point at camera-frame depth `depth` along pixel position `uv`.
    pub fn unproject(&self, uv: Vector2<f64>, depth: f64) -> Vec3 {
        let ray = self.camera_ray(uv);
        self.r.transpose() * (ray * depth - self.t)
    }

    /// Camera-frame direction with `z = 1` through pixel position `uv`.
    fn camera_ray(&self, uv: Vector2<f64>) -> Vec3 {
        let k = &self.k;
        let y = (uv.y - k[(1, 2)]) / k[(1, 1)];
        let x = (uv.x - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
        Vec3::new(x, y, 1.0)
    }

    /// Unit world-space ray direction through the center of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Vec3 {
        let d = self.camera_ray(Vector2::new(i as f64 + 0.5, j as f64 + 0.5));
        (self.r.transpose() * d).normalize()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}
