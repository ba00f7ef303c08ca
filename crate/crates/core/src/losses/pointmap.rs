use nalgebra::Vector3;

use super::{LossFlag, LossReport};
use crate::error::{Error, Result};

/// Side of the square grid the alignment loss is evaluated on.
pub const ALIGNMENT_RESOLUTION: usize = 48;

/// Nearest-neighbour resampling of a row-major `width x height` point map to
/// `out x out`, sampling at output cell centers.
pub fn downsample_point_map(
    points: &[Vector3<f64>],
    valid: &[bool],
    width: usize,
    height: usize,
    out: usize,
) -> Result<(Vec<Vector3<f64>>, Vec<bool>)> {
    if points.len() != width * height || valid.len() != points.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} points and {} mask entries for a {width}x{height} map",
            points.len(),
            valid.len()
        )));
    }
    let mut p = Vec::with_capacity(out * out);
    let mut v = Vec::with_capacity(out * out);
    for j in 0..out {
        let sy = (((j as f64 + 0.5) * height as f64 / out as f64) as usize).min(height - 1);
        for i in 0..out {
            let sx = (((i as f64 + 0.5) * width as f64 / out as f64) as usize).min(width - 1);
            p.push(points[sy * width + sx]);
            v.push(valid[sy * width + sx]);
        }
    }
    Ok((p, v))
}

/// Mean Euclidean residual after fitting `gt ~ a * pred + b` (scalar scale,
/// vector shift) by least squares over the valid points.
///
/// Gradient with respect to `pred`, laid out as `3 * i + axis`.
pub fn global_pointmap_alignment(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    valid: &[bool],
) -> Result<LossReport> {
    if pred.len() != gt.len() || pred.len() != valid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted points, {} targets, {} mask entries",
            pred.len(),
            gt.len(),
            valid.len()
        )));
    }
    let mut grad = vec![0.0; 3 * pred.len()];
    let idx: Vec<usize> = (0..pred.len())
        .filter(|&i| valid[i] && pred[i].iter().chain(gt[i].iter()).all(|v| v.is_finite()))
        .collect();
    if idx.len() < 4 {
        return Ok(LossReport::single("alignment", 0.0, 1.0, grad, vec![LossFlag::Underdetermined]));
    }
    let n = idx.len() as f64;
    let xbar = idx.iter().map(|&i| pred[i]).sum::<Vector3<f64>>() / n;
    let ybar = idx.iter().map(|&i| gt[i]).sum::<Vector3<f64>>() / n;
    let u: Vec<Vector3<f64>> = idx.iter().map(|&i| pred[i] - xbar).collect();
    let v: Vec<Vector3<f64>> = idx.iter().map(|&i| gt[i] - ybar).collect();
    let suu: f64 = u.iter().map(|x| x.norm_squared()).sum();
    let suv: f64 = u.iter().zip(&v).map(|(a, b)| a.dot(b)).sum();
    if suu <= f64::EPSILON * (1.0 + v.iter().map(|x| x.norm_squared()).sum::<f64>()) {
        // prediction collapsed to a point: only the shift can be fitted
        let value = v.iter().map(|x| x.norm()).sum::<f64>() / n;
        return Ok(LossReport::single("alignment", value, 1.0, grad, vec![LossFlag::Underdetermined]));
    }
    let a = suv / suu;
    let e: Vec<Vector3<f64>> = u.iter().zip(&v).map(|(ui, vi)| a * ui - vi).collect();
    let value = e.iter().map(|x| x.norm()).sum::<f64>() / n;

    let ehat: Vec<Vector3<f64>> = e
        .iter()
        .map(|x| {
            let m = x.norm();
            if m > 0.0 {
                x / m
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    let ehat_mean = ehat.iter().sum::<Vector3<f64>>() / n;
    let eu: f64 = ehat.iter().zip(&u).map(|(a, b)| a.dot(b)).sum();
    for (k, &i) in idx.iter().enumerate() {
        let da = (v[k] - 2.0 * a * u[k]) / suu;
        let g = (eu * da + a * (ehat[k] - ehat_mean)) / n;
        grad[3 * i..3 * i + 3].copy_from_slice(g.as_slice());
    }
    Ok(LossReport::single("alignment", value, 1.0, grad, vec![]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> Vec<Vector3<f64>> {
        (0..20)
            .map(|i| {
                let t = i as f64;
                Vector3::new((t * 0.7).sin() * 2.0, (t * 1.3).cos(), 3.0 + 0.1 * t)
            })
            .collect()
    }

    #[test]
    fn affine_invariance() {
        let gt = cloud();
        let valid = vec![true; gt.len()];
        assert!(global_pointmap_alignment(&gt, &gt, &valid).unwrap().value < 1e-12);
        let shifted: Vec<_> = gt.iter().map(|p| 2.5 * p + Vector3::new(1.0, -3.0, 0.5)).collect();
        assert!(global_pointmap_alignment(&shifted, &gt, &valid).unwrap().value < 1e-12);
    }

    #[test]
    fn underdetermined() {
        let gt = cloud();
        let mut valid = vec![false; gt.len()];
        valid[..3].fill(true);
        let r = global_pointmap_alignment(&gt, &gt, &valid).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.has_flag(LossFlag::Underdetermined));
    }

    #[test]
    fn downsample_picks_cell_centers() {
        let pts: Vec<_> = (0..96 * 96).map(|k| Vector3::new(k as f64, 0.0, 1.0)).collect();
        let (p, v) = downsample_point_map(&pts, &vec![true; pts.len()], 96, 96, 48).unwrap();
        assert_eq!(p.len(), 48 * 48);
        assert!(v.iter().all(|&b| b));
        // cell (0, 0) center maps to source pixel (1, 1)
        assert_eq!(p[0].x, 97.0);
    }
}
