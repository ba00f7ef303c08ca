use serde::{Deserialize, Serialize};

use super::{LossFlag, LossReport};
use crate::error::{Error, Result};

pub const SILOG_LAMBDA: f64 = 0.15;
pub const MASK_BCE_WEIGHT: f64 = 0.1;
/// Pixels whose predicted/true depth ratio leaves `[1/RATIO_LIMIT, RATIO_LIMIT]` are ignored.
pub const RATIO_LIMIT: f64 = 3.0;

const PROB_EPS: f64 = 1e-12;

/// Per-pixel supervision state of a depth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskState {
    Finite,
    Invalid,
    Unknown,
}

/// Effective mask: caller validity, positive depths and a bounded depth ratio.
pub fn depth_validity(pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<Vec<bool>> {
    if pred.len() != gt.len() || pred.len() != valid.len() {
        return Err(Error::ShapeMismatch(format!(
            "depth maps of {} and {} pixels with a mask of {}",
            pred.len(),
            gt.len(),
            valid.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .zip(valid)
        .map(|((&p, &g), &v)| {
            v && g > 0.0 && p > 0.0 && p.is_finite() && g.is_finite() && {
                let r = p / g;
                (1.0 / RATIO_LIMIT..=RATIO_LIMIT).contains(&r)
            }
        })
        .collect())
}

/// `sqrt(Var(g) + 0.15 Mean(g)^2)` with `g = ln pred - ln gt` on valid pixels.
/// Gradient with respect to `pred`.
pub fn silog(pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<LossReport> {
    let mask = depth_validity(pred, gt, valid)?;
    let mut grad = vec![0.0; pred.len()];
    let idx: Vec<usize> = (0..pred.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Ok(LossReport::single("silog", 0.0, 1.0, grad, vec![LossFlag::EmptyValidSet]));
    }
    let n = idx.len() as f64;
    let g: Vec<f64> = idx.iter().map(|&i| pred[i].ln() - gt[i].ln()).collect();
    let mean = g.iter().sum::<f64>() / n;
    let var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let value = (var + SILOG_LAMBDA * mean * mean).sqrt();
    if value > 0.0 {
        // d/dg_i = (g_i - (1 - lambda) mean) / (n L)
        for (&i, &gi) in idx.iter().zip(&g) {
            grad[i] = (gi - (1.0 - SILOG_LAMBDA) * mean) / (n * value) / pred[i];
        }
    }
    Ok(LossReport::single("silog", value, 1.0, grad, vec![]))
}

/// Mean absolute depth error on valid pixels. Gradient with respect to `pred`.
pub fn depth_l1(pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<LossReport> {
    let mask = depth_validity(pred, gt, valid)?;
    let mut grad = vec![0.0; pred.len()];
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Ok(LossReport::single("depth_l1", 0.0, 1.0, grad, vec![LossFlag::EmptyValidSet]));
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    for i in (0..pred.len()).filter(|&i| mask[i]) {
        let d = pred[i] - gt[i];
        total += d.abs();
        if d != 0.0 {
            grad[i] = inv * d.signum();
        }
    }
    Ok(LossReport::single("depth_l1", total * inv, 1.0, grad, vec![]))
}

/// Weighted BCE of the per-pixel validity confidence. Unknown pixels are
/// skipped. Gradient with respect to `pred_conf`.
pub fn mask_bce(pred_conf: &[f64], gt_state: &[MaskState]) -> Result<LossReport> {
    if pred_conf.len() != gt_state.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} confidences for {} mask pixels",
            pred_conf.len(),
            gt_state.len()
        )));
    }
    let mut grad = vec![0.0; pred_conf.len()];
    let n = gt_state.iter().filter(|s| **s != MaskState::Unknown).count();
    if n == 0 {
        return Ok(LossReport::single(
            "mask_bce",
            0.0,
            MASK_BCE_WEIGHT,
            grad,
            vec![LossFlag::EmptyValidSet],
        ));
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, (&p, s)) in pred_conf.iter().zip(gt_state).enumerate() {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        match s {
            MaskState::Finite => {
                total -= p.ln();
                grad[i] = -MASK_BCE_WEIGHT * inv / p;
            }
            MaskState::Invalid => {
                total -= (1.0 - p).ln();
                grad[i] = MASK_BCE_WEIGHT * inv / (1.0 - p);
            }
            MaskState::Unknown => {}
        }
    }
    Ok(LossReport::single("mask_bce", total * inv, MASK_BCE_WEIGHT, grad, vec![]))
}
