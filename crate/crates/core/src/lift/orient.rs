use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::camera::CameraModel;
use crate::geometry::rotation::{r_y, yaw_of};
use crate::geometry::{Box2D, Box3D};

use super::fit::vertical_frame;

pub const DEFAULT_VERTICAL: Vector3<f64> = Vector3::new(0.0, -1.0, 0.0);
/// Largest accepted angle between an estimated ground normal and the camera y axis.
pub const MAX_GROUND_TILT_DEG: f64 = 15.0;
/// Fraction of the scene (largest camera y, i.e. physically lowest) used as ground candidates.
pub const GROUND_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalEstimate {
    pub vertical: Vector3<f64>,
    /// Whether the ground plane fit was accepted (otherwise the default is kept).
    pub from_ground: bool,
    pub tilt_deg: f64,
}

/// Dominant plane normal of the lowest scene points, accepted when it lies
/// within [`MAX_GROUND_TILT_DEG`] of the camera y axis. The result points along
/// camera -y like the default.
pub fn estimate_vertical(points: &[Vector3<f64>]) -> VerticalEstimate {
    let default = VerticalEstimate {
        vertical: DEFAULT_VERTICAL,
        from_ground: false,
        tilt_deg: 0.0,
    };
    if points.len() < 10 {
        return default;
    }
    let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    let cut = ys[((1.0 - GROUND_FRACTION) * (ys.len() - 1) as f64) as usize];
    let low: Vec<&Vector3<f64>> = points.iter().filter(|p| p.y >= cut).collect();
    if low.len() < 3 {
        return default;
    }
    let mean = low.iter().copied().sum::<Vector3<f64>>() / low.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &low {
        let d = *p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    // require a clearly planar patch
    if !(l1 > 0.0 && l0 <= 0.05 * l1) {
        return default;
    }
    let mut n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    if n.y > 0.0 {
        n = -n;
    }
    let tilt = n.dot(&DEFAULT_VERTICAL).clamp(-1.0, 1.0).acos().to_degrees();
    if tilt <= MAX_GROUND_TILT_DEG {
        VerticalEstimate {
            vertical: n.normalize(),
            from_ground: true,
            tilt_deg: tilt,
        }
    } else {
        VerticalEstimate { tilt_deg: tilt, ..default }
    }
}

/// Re-aligns the box to the scene vertical estimated from `scene_points` and
/// picks the yaw in a 1 degree grid over `[0, 180)` (plus the box's current yaw
/// about that vertical) minimizing `1 - GIoU` of the projected box against
/// `box2d`. Ties prefer the yaw closest to the current one.
pub fn correct_rotation(b: &Box3D, scene_points: &[Vector3<f64>], box2d: &Box2D, camera: &CameraModel) -> Box3D {
    let vertical = estimate_vertical(scene_points).vertical;
    correct_rotation_with_vertical(b, &vertical, box2d, camera)
}

pub fn correct_rotation_with_vertical(b: &Box3D, vertical: &Vector3<f64>, box2d: &Box2D, camera: &CameraModel) -> Box3D {
    let Ok(frame) = vertical_frame(vertical) else {
        return *b;
    };
    let rel = (frame.inverse() * b.rotation()).to_rotation_matrix().into_inner();
    let current = yaw_of(&rel).rem_euclid(std::f64::consts::PI);
    let loss = |yaw: f64| {
        let cand = b.with_rotation(frame * r_y(yaw));
        match camera.project_box(&cand, 1e-3) {
            Some(p) => 1.0 - p.giou(box2d),
            None => 2.0,
        }
    };
    let circ = |a: f64| {
        let d = (a - current).rem_euclid(std::f64::consts::PI);
        d.min(std::f64::consts::PI - d)
    };
    let mut best = (current, loss(current));
    for k in 0..180 {
        let yaw = (k as f64).to_radians();
        let l = loss(yaw);
        if l < best.1 - 1e-12 || ((l - best.1).abs() <= 1e-12 && circ(yaw) < circ(best.0)) {
            best = (yaw, l);
        }
    }
    b.with_rotation(frame * r_y(best.0))
}
