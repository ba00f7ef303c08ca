use super::{LossFlag, LossReport};
use crate::codec::BoxEncoding12;
use crate::error::{Error, Result};

/// Masked L1 over matched encodings, normalized by the number of pairs.
///
/// Gradient layout: `12 * i + k` for component `k` of prediction `i`.
pub fn l3d_regression(
    preds: &[BoxEncoding12],
    targets: &[BoxEncoding12],
    validity_weights: &[[f64; 12]],
) -> Result<LossReport> {
    if preds.len() != targets.len() || preds.len() != validity_weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions, {} targets, {} weight rows",
            preds.len(),
            targets.len(),
            validity_weights.len()
        )));
    }
    let n = preds.len();
    let mut grad = vec![0.0; 12 * n];
    if n == 0 {
        return Ok(LossReport::single("l3d", 0.0, 1.0, grad, vec![LossFlag::NoPositives]));
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, ((p, t), w)) in preds.iter().zip(targets).zip(validity_weights).enumerate() {
        for k in 0..12 {
            let d = p.0[k] - t.0[k];
            total += w[k] * d.abs();
            grad[12 * i + k] = inv * w[k] * d.signum() * (d != 0.0) as u8 as f64;
        }
    }
    Ok(LossReport::single("l3d", total * inv, 1.0, grad, vec![]))
}
