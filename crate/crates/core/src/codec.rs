//! The 12-dimensional box regression target, the 3D confidence target and
//! score fusion.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{rot6d_to_matrix, Box2D, Box3D, Rot6D};

/// Pixel offsets are divided by this.
pub const CENTER_SCALE: f64 = 10.0;
pub const DEPTH_SCALE: f64 = 2.0;
pub const DIM_SCALE: f64 = 2.0;
/// Weight of depth quality in the confidence target.
pub const DEPTH_QUALITY_WEIGHT: f64 = 0.7;
/// Weight of the 3D confidence in the fused ranking score.
pub const FUSION_WEIGHT: f64 = 0.5;

/// `(dcx, dcy, dhat, what, hhat, lhat, r1..r6)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxEncoding12(pub [f64; 12]);

impl BoxEncoding12 {
    pub const LEN: usize = 12;
    pub const DEPTH: usize = 2;

    pub fn center_offset(&self) -> [f64; 2] {
        [self.0[0], self.0[1]]
    }

    pub fn log_depth(&self) -> f64 {
        self.0[2]
    }

    pub fn log_dims(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn rot6d(&self) -> Rot6D {
        Rot6D([self.0[6], self.0[7], self.0[8], self.0[9], self.0[10], self.0[11]])
    }
}

/// Encodes a box relative to its 2D box. The rotation is canonicalized first so
/// every physical box has exactly one target.
pub fn encode(b: &Box3D, box2d: &Box2D, camera: &CameraModel) -> Result<BoxEncoding12> {
    let b = b.normalized();
    let c = b.center();
    let proj = camera.project(&c)?;
    let [bx, by] = box2d.center();
    let d = b.dims();
    let r = Rot6D::from_matrix(&b.rotation_matrix()).0;
    Ok(BoxEncoding12([
        (proj.x - bx) / CENTER_SCALE,
        (proj.y - by) / CENTER_SCALE,
        DEPTH_SCALE * c.z.ln(),
        DIM_SCALE * d.x.ln(),
        DIM_SCALE * d.y.ln(),
        DIM_SCALE * d.z.ln(),
        r[0],
        r[1],
        r[2],
        r[3],
        r[4],
        r[5],
    ]))
}

pub fn decode(enc: &BoxEncoding12, box2d: &Box2D, camera: &CameraModel) -> Result<Box3D> {
    if !enc.0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("box encoding"));
    }
    let [bx, by] = box2d.center();
    let [dx, dy] = enc.center_offset();
    let pixel = Vector2::new(bx + dx * CENTER_SCALE, by + dy * CENTER_SCALE);
    let depth = (enc.log_depth() / DEPTH_SCALE).exp();
    let dims = Vector3::from(enc.log_dims().map(|v| (v / DIM_SCALE).exp()));
    if !depth.is_finite() || !dims.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::NonFinite("decoded depth or dimensions"));
    }
    let center = camera.backproject(&pixel, depth)?;
    let rot = rot6d_to_matrix(&enc.rot6d())?;
    Box3D::from_matrix(center, dims, &rot)
}

/// `exp(-|pred - gt|)` on natural-log depths; 1 for a perfect prediction.
pub fn q_depth(pred_log_depth: f64, gt_log_depth: f64) -> f64 {
    (-(pred_log_depth - gt_log_depth).abs()).exp()
}

/// Soft target for the 3D confidence branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceTarget {
    pub q_depth: f64,
    pub iou3d: f64,
    pub qstar: f64,
}

impl ConfidenceTarget {
    pub fn new(q_depth: f64, iou3d: f64) -> Self {
        Self {
            q_depth,
            iou3d,
            qstar: DEPTH_QUALITY_WEIGHT * q_depth + (1.0 - DEPTH_QUALITY_WEIGHT) * iou3d,
        }
    }

    /// Target for a predicted box against its matched ground truth.
    pub fn for_match(pred: &Box3D, gt: &Box3D) -> Self {
        Self::new(
            q_depth(pred.center().z.ln(), gt.center().z.ln()),
            crate::geometry::iou3d(pred, gt),
        )
    }
}

/// Ranking score `s2d + 0.5 * s3d`, in `[0, 1.5]`.
pub fn fuse_score(s2d: f64, s3d: f64) -> f64 {
    s2d + FUSION_WEIGHT * s3d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::r_y;

    fn cam() -> CameraModel {
        CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn encode_examples() {
        let c = cam();
        let b = Box3D::new(Vector3::new(0.0, 0.0, 4.0), Vector3::new(1.0, 2.0, 3.0), r_y(0.2)).unwrap();
        let b2 = Box2D::from_center_size(320.0, 240.0, 100.0, 100.0).unwrap();
        let e = encode(&b, &b2, &c).unwrap();
        assert!((e.log_depth() - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((e.log_depth() - 2.77259).abs() < 1e-5);
        let ld = e.log_dims();
        assert!(ld[0].abs() < 1e-15);
        assert!((ld[1] - 1.38629).abs() < 1e-5);
        assert!((ld[2] - 2.19722).abs() < 1e-5);
        assert_eq!(e.center_offset(), [0.0, 0.0]);
    }

    #[test]
    fn decode_examples() {
        let c = cam();
        let b2 = Box2D::from_center_size(320.0, 240.0, 50.0, 50.0).unwrap();
        let mut v = [0.0; 12];
        v[6] = 1.0;
        v[10] = 1.0;
        let b = decode(&BoxEncoding12(v), &b2, &c).unwrap();
        assert!((b.center().z - 1.0).abs() < 1e-15);
        v[0] = 1.0;
        let b = decode(&BoxEncoding12(v), &b2, &c).unwrap();
        let p = c.project(&b.center()).unwrap();
        assert!((p.x - 330.0).abs() < 1e-9 && (p.y - 240.0).abs() < 1e-9);

        v[2] = f64::NAN;
        assert!(decode(&BoxEncoding12(v), &b2, &c).is_err());
        v[2] = 5000.0;
        assert!(decode(&BoxEncoding12(v), &b2, &c).is_err());
    }

    #[test]
    fn encode_rejects_boxes_behind_camera() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, -2.0), Vector3::repeat(1.0)).unwrap();
        let b2 = Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(encode(&b, &b2, &cam()).is_err());
    }

    #[test]
    fn depth_quality_and_fusion() {
        assert_eq!(q_depth(1.3, 1.3), 1.0);
        assert!((q_depth(2f64.ln() + 0.4, 0.4) - 0.5).abs() < 1e-15);
        assert_eq!(q_depth(0.1, 0.7), q_depth(0.7, 0.1));
        assert!((fuse_score(0.8, 0.4) - 1.0).abs() < 1e-15);
        assert_eq!(fuse_score(0.3, 0.0), 0.3);
        assert!(fuse_score(0.5, 0.6) > fuse_score(0.5, 0.4));
    }

    #[test]
    fn qstar_is_convex_combination() {
        for (q, i) in [(0.2, 0.9), (1.0, 0.0), (0.5, 0.5)] {
            let t = ConfidenceTarget::new(q, i);
            assert_eq!(t.qstar, 0.7 * q + 0.3 * i);
            assert!(t.qstar >= q.min(i) - 1e-15 && t.qstar <= q.max(i) + 1e-15);
        }
    }
}
