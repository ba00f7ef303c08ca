use nalgebra::Matrix3;

use super::LossReport;
use crate::camera::CameraModel;

/// Mean squared difference between the ray fields of two cameras sampled on a
/// `width x height` grid (each camera spans its own image).
///
/// Gradient with respect to the predicted `(fx, fy, cx, cy)`.
pub fn camera_ray_mse(pred: &CameraModel, gt: &CameraModel, width: usize, height: usize) -> LossReport {
    let sp = (pred.width as f64 / width as f64, pred.height as f64 / height as f64);
    let sg = (gt.width as f64 / width as f64, gt.height as f64 / height as f64);
    let n = width * height;
    if n == 0 {
        return LossReport::single("camera_ray", 0.0, 1.0, vec![0.0; 4], vec![]);
    }
    let scale = 2.0 / (3 * n) as f64;
    let mut total = 0.0;
    let mut grad = [0.0; 4];
    for j in 0..height {
        for i in 0..width {
            let (fi, fj) = (i as f64 + 0.5, j as f64 + 0.5);
            let (u, v) = (fi * sp.0, fj * sp.1);
            let h = pred.homogeneous_ray(u, v);
            let hn = h.norm();
            let r = h / hn;
            let d = r - gt.ray(fi * sg.0, fj * sg.1);
            total += d.norm_squared();
            // dr/dh = (I - r r^T) / |h|
            let dr = (Matrix3::identity() - r * r.transpose()) / hn;
            let back = dr.transpose() * d * scale;
            let (dhx, dhy) = (back.x, back.y);
            grad[0] += dhx * -(u - pred.cx) / (pred.fx * pred.fx);
            grad[1] += dhy * -(v - pred.cy) / (pred.fy * pred.fy);
            grad[2] -= dhx / pred.fx;
            grad[3] -= dhy / pred.fy;
        }
    }
    LossReport::single("camera_ray", total / (3 * n) as f64, 1.0, grad.to_vec(), vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_symmetric() {
        let a = CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let b = CameraModel::new(450.0, 520.0, 300.0, 250.0, 640, 480).unwrap();
        assert_eq!(camera_ray_mse(&a, &a, 32, 24).value, 0.0);
        let ab = camera_ray_mse(&a, &b, 32, 24).value;
        let ba = camera_ray_mse(&b, &a, 32, 24).value;
        assert!(ab > 0.0);
        assert!((ab - ba).abs() < 1e-15);
    }
}
