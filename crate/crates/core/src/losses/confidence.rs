use super::{bce_logit, sigmoid, softplus, LossFlag, LossReport, LossTerm};
use crate::error::{Error, Result};

pub const POSITIVE_WEIGHT: f64 = 5.0;
pub const FOCAL_GAMMA: f64 = 2.0;
pub const CONF_ALPHA: f64 = 0.25;

/// IoU-aware soft target `sigmoid(c)^alpha * quality^(1 - alpha)`.
pub fn soft_target(logit: f64, quality: f64) -> f64 {
    sigmoid(logit).powf(CONF_ALPHA) * quality.powf(1.0 - CONF_ALPHA)
}

/// 3D confidence loss.
///
/// The soft target of each matched logit is computed from the logit itself and
/// then treated as a constant. Gradient layout: matched logits first, then
/// unmatched ones.
pub fn conf_loss(logits_matched: &[f64], qstars: &[f64], logits_unmatched: &[f64]) -> Result<LossReport> {
    if logits_matched.len() != qstars.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} matched logits but {} quality targets",
            logits_matched.len(),
            qstars.len()
        )));
    }
    if let Some(q) = qstars.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::ShapeMismatch(format!("quality target {q} outside [0, 1]")));
    }
    let targets: Vec<f64> = logits_matched.iter().zip(qstars).map(|(&c, &q)| soft_target(c, q)).collect();
    Ok(conf_loss_with_targets(logits_matched, &targets, logits_unmatched))
}

/// Same loss with explicit (fixed) soft targets for the matched logits.
pub fn conf_loss_with_targets(logits_matched: &[f64], targets: &[f64], logits_unmatched: &[f64]) -> LossReport {
    let (pos, pos_grad, mut flags) = positive_term(logits_matched, targets);
    let (neg, neg_grad, neg_flags) = focal_negative_term(logits_unmatched);
    flags.extend(neg_flags);
    let mut gradient = pos_grad;
    gradient.extend(neg_grad);
    LossReport::from_terms(
        vec![
            LossTerm {
                name: "positive",
                value: pos,
                weight: 1.0,
            },
            LossTerm {
                name: "negative",
                value: neg,
                weight: 1.0,
            },
        ],
        gradient,
        flags,
    )
}

/// `(1/N) sum w+ * BCE(sigmoid(c), t)` with gradient in `c`.
pub(super) fn positive_term(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>, Vec<LossFlag>) {
    if logits.is_empty() {
        return (0.0, Vec::new(), vec![LossFlag::NoPositives]);
    }
    let inv = 1.0 / logits.len() as f64;
    let value = logits
        .iter()
        .zip(targets)
        .map(|(&c, &t)| POSITIVE_WEIGHT * bce_logit(c, t))
        .sum::<f64>()
        * inv;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&c, &t)| inv * POSITIVE_WEIGHT * (sigmoid(c) - t))
        .collect();
    (value, grad, vec![])
}

/// `(1/N) sum sigmoid(c)^2 * BCE(sigmoid(c), 0)` with gradient in `c`.
pub(super) fn focal_negative_term(logits: &[f64]) -> (f64, Vec<f64>, Vec<LossFlag>) {
    if logits.is_empty() {
        return (0.0, Vec::new(), vec![LossFlag::NoNegatives]);
    }
    let inv = 1.0 / logits.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for &c in logits {
        let s = sigmoid(c);
        let sp = softplus(c);
        value += s * s * sp;
        // d/dc [s^2 sp] = 2 s^2 (1 - s) sp + s^3
        grad.push(inv * (2.0 * s * s * (1.0 - s) * sp + s * s * s));
    }
    (value * inv, grad, vec![])
}
