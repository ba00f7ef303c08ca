use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use crate::error::{Error, Result};

/// Sign pattern of corner `k`: bit 2 selects +x, bit 1 selects +y, bit 0 selects +z.
pub const CORNER_SIGNS: [[f64; 3]; 8] = [
    [-0.5, -0.5, -0.5],
    [-0.5, -0.5, 0.5],
    [-0.5, 0.5, -0.5],
    [-0.5, 0.5, 0.5],
    [0.5, -0.5, -0.5],
    [0.5, -0.5, 0.5],
    [0.5, 0.5, -0.5],
    [0.5, 0.5, 0.5],
];

/// An oriented 3D bounding box in camera coordinates (+x right, +y down, +z forward).
///
/// `dims` holds `(w, h, l)`: the extents along the box's local x, y and z axes.
/// The rotation maps local box coordinates to camera coordinates and is stored
/// as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    center: Vector3<f64>,
    dims: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Box3D {
    pub fn new(center: Vector3<f64>, dims: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Result<Self> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite center {center:?}")));
        }
        if !dims.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidBox(format!(
                "dimensions must be positive and finite, got ({}, {}, {})",
                dims.x, dims.y, dims.z
            )));
        }
        let q = rotation.into_inner();
        if !q.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox("non-finite rotation".into()));
        }
        Ok(Self {
            center,
            dims,
            rotation: UnitQuaternion::new_normalize(q),
        })
    }

    /// Builds a box from a scalar-first quaternion `(w, x, y, z)`, which must be
    /// unit-norm within `tol`.
    pub fn from_wxyz(center: Vector3<f64>, dims: Vector3<f64>, wxyz: [f64; 4], tol: f64) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tol {
            return Err(Error::InvalidBox(format!("quaternion norm {norm} is not 1")));
        }
        Self::new(center, dims, UnitQuaternion::new_unchecked(q))
    }

    pub fn from_matrix(center: Vector3<f64>, dims: Vector3<f64>, rotation: &Matrix3<f64>) -> Result<Self> {
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        Self::new(center, dims, UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn axis_aligned(center: Vector3<f64>, dims: Vector3<f64>) -> Result<Self> {
        Self::new(center, dims, UnitQuaternion::identity())
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    pub fn dims(&self) -> Vector3<f64> {
        self.dims
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    /// Scalar-first quaternion components.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    /// Half of the dimension vector's Euclidean norm.
    pub fn radius(&self) -> f64 {
        self.dims.norm() / 2.0
    }

    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        Self { center, ..*self }
    }

    pub fn with_rotation(&self, rotation: UnitQuaternion<f64>) -> Self {
        Self { rotation, ..*self }
    }

    /// The eight corners, ordered as in [`CORNER_SIGNS`].
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let r = self.rotation_matrix();
        CORNER_SIGNS.map(|s| {
            let local = Vector3::new(s[0] * self.dims.x, s[1] * self.dims.y, s[2] * self.dims.z);
            r * local + self.center
        })
    }

    /// Camera-frame point expressed in the box's local frame (origin at the center).
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.center))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let q = self.to_local(p);
        (0..3).all(|i| q[i].abs() <= 0.5 * self.dims[i])
    }

    /// Euclidean distance from `p` to the box, 0 for points inside.
    pub fn outside_distance(&self, p: &Vector3<f64>) -> f64 {
        let q = self.to_local(p);
        let excess = Vector3::from_fn(|i, _| (q[i].abs() - 0.5 * self.dims[i]).max(0.0));
        excess.norm()
    }

    /// Smallest `t > 0` with `origin + t * dir` on the box surface (slab test in
    /// the local frame), or `None` if the ray misses. A ray starting inside hits
    /// at its exit point.
    pub fn ray_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.rotation.inverse_transform_vector(dir);
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..3 {
            let h = 0.5 * self.dims[i];
            if d[i].abs() < 1e-300 {
                if o[i].abs() > h {
                    return None;
                }
                continue;
            }
            let (a, b) = ((-h - o[i]) / d[i], (h - o[i]) / d[i]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        if t0 > t1 || t1 <= 0.0 {
            return None;
        }
        Some(if t0 > 0.0 { t0 } else { t1 })
    }

    /// Heading of the box: the angle of the rotated local +z axis in the camera x-z plane,
    /// measured from +z towards +x, in `(-pi, pi]`.
    pub fn yaw(&self) -> f64 {
        super::rotation::yaw_of(&self.rotation_matrix())
    }

    /// Canonical form: `w <= l` and yaw folded into `[0, pi)`.
    pub fn normalized(&self) -> Self {
        let (dims, rotation) = super::rotation::normalize_rotation(&self.dims, &self.rotation);
        Self {
            center: self.center,
            dims,
            rotation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation::r_y;
    use std::f64::consts::FRAC_PI_2;

    fn sorted(mut pts: Vec<Vector3<f64>>) -> Vec<Vector3<f64>> {
        pts.sort_by(|a, b| {
            (a.x, a.y, a.z)
                .partial_cmp(&(b.x, b.y, b.z))
                .unwrap()
        });
        pts
    }

    #[test]
    fn unit_cube_corners() {
        let b = Box3D::axis_aligned(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        for (c, s) in b.corners().iter().zip(CORNER_SIGNS.iter()) {
            assert_eq!(c, &Vector3::new(s[0], s[1], s[2]));
        }
    }

    #[test]
    fn rotated_cube_has_same_corner_set() {
        let a = Box3D::axis_aligned(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let b = a.with_rotation(r_y(FRAC_PI_2));
        let ca = sorted(a.corners().to_vec());
        let cb: Vec<_> = b.corners().iter().map(|p| p.map(|v| (v * 1e9).round() / 1e9)).collect();
        let cb = sorted(cb);
        for (p, q) in ca.iter().zip(cb.iter()) {
            assert!((p - q).norm() < 1e-9);
        }
    }

    #[test]
    fn affine_corner_expansion() {
        let b = Box3D::axis_aligned(Vector3::new(1.0, 0.0, 5.0), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let c = b.corners();
        assert_eq!(c[0], Vector3::new(0.5, -1.0, 3.5));
        assert_eq!(c[7], Vector3::new(1.5, 1.0, 6.5));
        assert_eq!(c[5], Vector3::new(1.5, -1.0, 6.5));
    }

    #[test]
    fn rejects_bad_dims_and_quaternions() {
        assert!(Box3D::axis_aligned(Vector3::zeros(), Vector3::new(0.0, 1.0, 1.0)).is_err());
        assert!(Box3D::axis_aligned(Vector3::zeros(), Vector3::new(1.0, f64::NAN, 1.0)).is_err());
        assert!(Box3D::from_wxyz(Vector3::zeros(), Vector3::repeat(1.0), [2.0, 0.0, 0.0, 0.0], 1e-6).is_err());
        let b = Box3D::from_wxyz(Vector3::zeros(), Vector3::repeat(1.0), [1.0, 0.0, 0.0, 0.0], 1e-6).unwrap();
        assert!((b.rotation().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn outside_distance_is_zero_inside() {
        let b = Box3D::axis_aligned(Vector3::zeros(), Vector3::new(2.0, 2.0, 2.0)).unwrap();
        assert_eq!(b.outside_distance(&Vector3::new(0.5, -0.9, 0.0)), 0.0);
        assert!((b.outside_distance(&Vector3::new(4.0, 0.0, 0.0)) - 3.0).abs() < 1e-12);
        assert!((b.outside_distance(&Vector3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ray_hits() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 4.0), Vector3::repeat(1.0)).unwrap();
        let o = Vector3::zeros();
        assert!((b.ray_hit(&o, &Vector3::z()).unwrap() - 3.5).abs() < 1e-12);
        assert!(b.ray_hit(&o, &Vector3::x()).is_none());
        assert!(b.ray_hit(&o, &-Vector3::z()).is_none());
        let yawed = b.with_rotation(r_y(0.3));
        let t = yawed.ray_hit(&o, &Vector3::new(0.05, 0.02, 1.0)).unwrap();
        let p = Vector3::new(0.05, 0.02, 1.0) * t;
        assert!(yawed.outside_distance(&p) < 1e-9);
        let q = yawed.to_local(&p);
        assert!((0..3).any(|i| (q[i].abs() - 0.5).abs() < 1e-9));
    }
}
