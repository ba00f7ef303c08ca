//! Pinhole camera: projection, z-depth backprojection, per-pixel rays and the
//! spherical-harmonic ray encoding.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box2D, Box3D};

/// Pinhole intrinsics plus image size. Depth is z-depth throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidCamera("non-finite principal point".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p.z <= 1e-9 {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok(Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Point at z-depth `depth` along the pixel's ray.
    pub fn backproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.homogeneous_ray(pixel.x, pixel.y) * depth)
    }

    /// `K^-1 [u, v, 1]`, i.e. the ray scaled to unit z.
    pub fn homogeneous_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Unit ray direction through pixel coordinate `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.homogeneous_ray(u, v).normalize()
    }

    /// Axis-aligned image box around the projected corners, or `None` when a
    /// corner lies behind `min_z`.
    pub fn project_box(&self, b: &Box3D, min_z: f64) -> Option<Box2D> {
        let mut pts = [[0.0; 2]; 8];
        for (slot, c) in pts.iter_mut().zip(b.corners().iter()) {
            if c.z < min_z {
                return None;
            }
            let p = self.project(c).ok()?;
            *slot = [p.x, p.y];
        }
        Box2D::enclosing(pts.iter()).ok()
    }

    /// Projected corners, or `None` when a corner lies behind `min_z`.
    pub fn project_corners(&self, b: &Box3D, min_z: f64) -> Option<[[f64; 2]; 8]> {
        let mut pts = [[0.0; 2]; 8];
        for (slot, c) in pts.iter_mut().zip(b.corners().iter()) {
            if c.z < min_z {
                return None;
            }
            let p = self.project(c).ok()?;
            *slot = [p.x, p.y];
        }
        Some(pts)
    }

    pub fn ray_field(&self, width: usize, height: usize) -> RayField {
        RayField::new(self, width, height)
    }
}

/// Unit ray directions on a regular `width x height` grid of pixel centers
/// spanning the camera image. Sample `(i, j)` sits at
/// `u = (i + 0.5) * W / width`, `v = (j + 0.5) * H / height`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayField {
    pub width: usize,
    pub height: usize,
    pub rays: Vec<Vector3<f64>>,
}

impl RayField {
    pub fn new(camera: &CameraModel, width: usize, height: usize) -> Self {
        let sx = camera.width as f64 / width as f64;
        let sy = camera.height as f64 / height as f64;
        let rays = (0..height)
            .into_par_iter()
            .flat_map_iter(|j| {
                (0..width).map(move |i| camera.ray((i as f64 + 0.5) * sx, (j as f64 + 0.5) * sy))
            })
            .collect();
        Self { width, height, rays }
    }

    pub fn get(&self, i: usize, j: usize) -> Vector3<f64> {
        self.rays[j * self.width + i]
    }

    /// Mean squared component difference between two equally sized fields.
    pub fn mse(&self, other: &RayField) -> Result<f64> {
        if self.rays.len() != other.rays.len() {
            return Err(Error::ShapeMismatch("ray fields differ in size".into()));
        }
        let s: f64 = self
            .rays
            .iter()
            .zip(&other.rays)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        Ok(s / (3 * self.rays.len()) as f64)
    }
}

/// Number of real spherical harmonics up to degree 8.
pub const RSH8_LEN: usize = 81;
const RSH_DEGREE: usize = 8;

/// Index of `(l, m)` in degree-major ordering.
pub const fn rsh_index(l: usize, m: i64) -> usize {
    l * l + (l as i64 + m) as usize
}

/// Real, orthonormal spherical harmonics of degree 0..=8 at `direction`
/// (normalized internally), z as the polar axis, no Condon-Shortley phase,
/// ordered `l = 0..=8`, `m = -l..=l`.
///
/// Uses the associated Legendre recurrence on `cos(theta)` and builds
/// `sin^m(theta) * cos/sin(m phi)` from powers of `x + iy`, so the poles need
/// no special casing.
pub fn rsh8(direction: &Vector3<f64>) -> Result<[f64; RSH8_LEN]> {
    let n = direction.norm();
    if !n.is_finite() {
        return Err(Error::NonFinite("direction"));
    }
    if n == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let (x, y, z) = (direction.x / n, direction.y / n, direction.z / n);
    let mut out = [0.0; RSH8_LEN];

    // (x + iy)^m = sin^m(theta) e^{i m phi}
    let mut cos_m = [0.0; RSH_DEGREE + 1];
    let mut sin_m = [0.0; RSH_DEGREE + 1];
    cos_m[0] = 1.0;
    for m in 1..=RSH_DEGREE {
        cos_m[m] = cos_m[m - 1] * x - sin_m[m - 1] * y;
        sin_m[m] = sin_m[m - 1] * x + cos_m[m - 1] * y;
    }

    // q[l][m] = P_l^m(z) / sin^m(theta)
    let mut q = [[0.0; RSH_DEGREE + 1]; RSH_DEGREE + 1];
    for m in 0..=RSH_DEGREE {
        // (2m-1)!!
        q[m][m] = (1..=m).map(|k| (2 * k - 1) as f64).product();
        if m < RSH_DEGREE {
            q[m + 1][m] = z * (2 * m + 1) as f64 * q[m][m];
        }
        for l in m + 2..=RSH_DEGREE {
            q[l][m] = ((2 * l - 1) as f64 * z * q[l - 1][m] - (l + m - 1) as f64 * q[l - 2][m]) / (l - m) as f64;
        }
    }

    let four_pi = 4.0 * std::f64::consts::PI;
    for l in 0..=RSH_DEGREE {
        for m in 0..=l {
            // (l-m)!/(l+m)!
            let ratio: f64 = ((l - m + 1)..=(l + m)).map(|k| 1.0 / k as f64).product();
            let norm = ((2 * l + 1) as f64 / four_pi * ratio).sqrt();
            if m == 0 {
                out[rsh_index(l, 0)] = norm * q[l][0];
            } else {
                let s = std::f64::consts::SQRT_2 * norm * q[l][m];
                out[rsh_index(l, m as i64)] = s * cos_m[m];
                out[rsh_index(l, -(m as i64))] = s * sin_m[m];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> CameraModel {
        CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn projection_examples() {
        let c = cam();
        assert_eq!(c.project(&Vector3::new(0.0, 0.0, 2.0)).unwrap(), Vector2::new(320.0, 240.0));
        assert_eq!(c.project(&Vector3::new(2.0, 0.0, 2.0)).unwrap(), Vector2::new(820.0, 240.0));
        assert!(matches!(c.project(&Vector3::new(1.0, 0.0, 0.0)), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn backprojection_examples() {
        let c = cam();
        assert_eq!(c.backproject(&Vector2::new(320.0, 240.0), 3.0).unwrap(), Vector3::new(0.0, 0.0, 3.0));
        assert_eq!(c.backproject(&Vector2::new(820.0, 240.0), 2.0).unwrap(), Vector3::new(2.0, 0.0, 2.0));
        assert!(c.backproject(&Vector2::new(1.0, 1.0), 0.0).is_err());
        assert!(c.backproject(&Vector2::new(1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraModel::new(1.0, 1.0, f64::NAN, 0.0, 10, 10).is_err());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
    }

    #[test]
    fn ray_field_properties() {
        // principal point at a pixel center of a 641x481 grid
        let c = CameraModel::new(500.0, 500.0, 320.5, 240.5, 641, 481).unwrap();
        let f = c.ray_field(641, 481);
        assert!((f.get(320, 240) - Vector3::z()).norm() < 1e-15);
        assert!(f.rays.iter().all(|r| (r.norm() - 1.0).abs() < 1e-9));
        assert_eq!(f.mse(&f).unwrap(), 0.0);

        // image size does not change the ray through a given pixel
        let big = CameraModel { width: 1280, height: 960, ..c };
        assert_eq!(c.ray(100.5, 77.5), big.ray(100.5, 77.5));
    }

    #[test]
    fn rsh_closed_forms() {
        let y = rsh8(&Vector3::new(0.3, -0.2, 0.9)).unwrap();
        assert_relative_eq!(y[0], 0.5 / std::f64::consts::PI.sqrt(), epsilon = 1e-15);
        let pole = rsh8(&Vector3::z()).unwrap();
        assert_relative_eq!(pole[rsh_index(1, 0)], (3.0 / (4.0 * std::f64::consts::PI)).sqrt(), epsilon = 1e-15);
        assert!(rsh8(&Vector3::zeros()).is_err());
    }

    #[test]
    fn rsh_scale_invariance() {
        let v = Vector3::new(0.12, -0.7, 0.3);
        let (a, b) = (rsh8(&v).unwrap(), rsh8(&(v * 3.0)).unwrap());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-14));
    }
}
