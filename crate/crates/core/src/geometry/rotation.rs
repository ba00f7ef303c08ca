//! Rotation representations: the continuous 6-D form, yaw extraction and the
//! canonicalization that gives every physical box a single parameterization.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Slack around the yaw folding boundaries so that canonicalization is
/// idempotent in floating point. Canonical yaw lies in `[-YAW_EPS, pi - YAW_EPS)`.
pub const YAW_EPS: f64 = 1e-9;

/// First two rows of a rotation matrix, before orthogonalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn from_matrix(r: &Matrix3<f64>) -> Self {
        Rot6D([r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)]])
    }

    pub fn rows(&self) -> (Vector3<f64>, Vector3<f64>) {
        let r = &self.0;
        (Vector3::new(r[0], r[1], r[2]), Vector3::new(r[3], r[4], r[5]))
    }
}

/// Recovers a rotation matrix via Gram-Schmidt on the two rows, completing the
/// third row with their cross product.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<Matrix3<f64>> {
    let (a, b) = r.rows();
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("6-D rotation"));
    }
    let na = a.norm();
    if na < 1e-9 {
        return Err(Error::DegenerateRotation("first row is zero".into()));
    }
    let e1 = a / na;
    let resid = b - e1 * e1.dot(&b);
    let nr = resid.norm();
    if nr < 1e-9 * b.norm().max(1.0) {
        return Err(Error::DegenerateRotation("rows are zero or parallel".into()));
    }
    let e2 = resid / nr;
    let e3 = e1.cross(&e2);
    Ok(Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]))
}

/// Rotation by `angle` radians about the camera y axis.
pub fn r_y(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle)
}

/// Angle of the rotated local +z axis projected to the x-z plane, measured from
/// +z towards +x. For `R_y(theta)` this returns `theta` (wrapped to `(-pi, pi]`).
pub fn yaw_of(r: &Matrix3<f64>) -> f64 {
    r[(0, 2)].atan2(r[(2, 2)])
}

/// Canonicalizes `(dims, rotation)`.
///
/// Step one swaps `w` and `l` (composing with a local `R_y(90°)`) when `w > l`;
/// step two composes with a local `R_y(180°)` when the yaw falls outside
/// `[0, pi)`. Both compositions act in the box frame, so the occupied point set
/// is unchanged for any pose, tilted or not.
pub fn normalize_rotation(
    dims: &Vector3<f64>,
    rotation: &UnitQuaternion<f64>,
) -> (Vector3<f64>, UnitQuaternion<f64>) {
    let mut dims = *dims;
    let mut rot = *rotation;
    if dims.x > dims.z {
        dims = Vector3::new(dims.z, dims.y, dims.x);
        rot = UnitQuaternion::new_normalize((rot * r_y(FRAC_PI_2)).into_inner());
    }
    let yaw = yaw_of(&rot.to_rotation_matrix().into_inner());
    if yaw < -YAW_EPS || yaw >= PI - YAW_EPS {
        rot = UnitQuaternion::new_normalize((rot * r_y(PI)).into_inner());
    }
    (dims, rot)
}

/// Angle of the relative rotation between `a` and `b`, in `[0, pi]`.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Minimal rotation taking the camera +y axis onto `vertical`.
pub fn align_y_to(vertical: &Vector3<f64>) -> UnitQuaternion<f64> {
    let v = vertical.normalize();
    UnitQuaternion::rotation_between(&Vector3::y(), &v).unwrap_or_else(|| {
        // antiparallel: half turn about x
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
    })
}

/// Rotation whose local +y axis is `vertical` and whose heading about it is `yaw`.
pub fn gravity_frame(vertical: &Vector3<f64>, yaw: f64) -> UnitQuaternion<f64> {
    align_y_to(vertical) * r_y(yaw)
}

pub fn matrix_to_quaternion(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}
