use serde::{Deserialize, Serialize};

use super::confidence::{focal_negative_term, positive_term, soft_target};
use super::{bce_logit, sigmoid, LossFlag, LossReport, LossTerm};
use crate::error::{Error, Result};
use crate::geometry::{giou_with_grad, Box2D};

pub const CLS_WEIGHT: f64 = 20.0;
pub const L1_WEIGHT: f64 = 5.0;
pub const GIOU_WEIGHT: f64 = 2.0;
pub const PRESENCE_WEIGHT: f64 = 20.0;
/// Class-balance factor of the presence BCE (applied to both classes).
pub const PRESENCE_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox2D {
    pub bbox: Box2D,
    pub logit: f64,
}

/// Presence logit of one queried category and whether it occurs in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub logit: f64,
    pub present: bool,
}

/// Image size used to normalize center-size coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss2dConfig {
    pub image_width: f64,
    pub image_height: f64,
}

fn cxcywh(b: &Box2D, cfg: &Loss2dConfig) -> [f64; 4] {
    [
        0.5 * (b.x1 + b.x2) / cfg.image_width,
        0.5 * (b.y1 + b.y2) / cfg.image_height,
        b.width() / cfg.image_width,
        b.height() / cfg.image_height,
    ]
}

/// Classification, box regression and presence losses of the 2D head.
///
/// `matches` pairs prediction indices with target indices. Gradient layout:
/// `5 * i + k` for prediction `i` with `k` indexing `(x1, y1, x2, y2, logit)`,
/// followed by one entry per presence logit.
pub fn loss_2d(
    preds: &[ScoredBox2D],
    targets: &[Box2D],
    matches: &[(usize, usize)],
    presence: &[Presence],
    cfg: &Loss2dConfig,
) -> Result<LossReport> {
    if !(cfg.image_width > 0.0 && cfg.image_height > 0.0) {
        return Err(Error::ShapeMismatch("image size must be positive".into()));
    }
    let mut matched = vec![false; preds.len()];
    let mut used_t = vec![false; targets.len()];
    for &(p, t) in matches {
        if p >= preds.len() || t >= targets.len() {
            return Err(Error::ShapeMismatch(format!("match ({p}, {t}) out of range")));
        }
        if matched[p] || used_t[t] {
            return Err(Error::ShapeMismatch(format!("match ({p}, {t}) reuses an index")));
        }
        matched[p] = true;
        used_t[t] = true;
    }

    let np = preds.len();
    let mut grad = vec![0.0; 5 * np + presence.len()];
    let mut flags = Vec::new();

    // classification: IoU-aware soft labels on matched, focal negatives on the rest
    let pos_logits: Vec<f64> = matches.iter().map(|&(p, _)| preds[p].logit).collect();
    let pos_targets: Vec<f64> = matches
        .iter()
        .map(|&(p, t)| soft_target(preds[p].logit, preds[p].bbox.iou(&targets[t])))
        .collect();
    let neg_idx: Vec<usize> = (0..np).filter(|&i| !matched[i]).collect();
    let neg_logits: Vec<f64> = neg_idx.iter().map(|&i| preds[i].logit).collect();
    let (pos, pos_grad, f1) = positive_term(&pos_logits, &pos_targets);
    let (neg, neg_grad, f2) = focal_negative_term(&neg_logits);
    flags.extend(f1);
    flags.extend(f2);
    for (&(p, _), g) in matches.iter().zip(&pos_grad) {
        grad[5 * p + 4] = CLS_WEIGHT * g;
    }
    for (&i, g) in neg_idx.iter().zip(&neg_grad) {
        grad[5 * i + 4] = CLS_WEIGHT * g;
    }

    // box regression over matched pairs
    let mut l1 = 0.0;
    let mut giou_loss = 0.0;
    if !matches.is_empty() {
        let inv = 1.0 / matches.len() as f64;
        let (sw, sh) = (1.0 / cfg.image_width, 1.0 / cfg.image_height);
        for &(p, t) in matches {
            let a = cxcywh(&preds[p].bbox, cfg);
            let b = cxcywh(&targets[t], cfg);
            let s: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| {
                    l1 += (x - y).abs();
                    if x == y {
                        0.0
                    } else {
                        (x - y).signum()
                    }
                })
                .collect();
            // d(cx)/dx1 = d(cx)/dx2 = 0.5 sw, d(w)/dx1 = -sw, d(w)/dx2 = sw
            let dl1 = [
                0.5 * sw * s[0] - sw * s[2],
                0.5 * sh * s[1] - sh * s[3],
                0.5 * sw * s[0] + sw * s[2],
                0.5 * sh * s[1] + sh * s[3],
            ];
            let (g, dg) = giou_with_grad(&preds[p].bbox, &targets[t]);
            giou_loss += 1.0 - g;
            for k in 0..4 {
                grad[5 * p + k] = inv * (L1_WEIGHT * dl1[k] - GIOU_WEIGHT * dg[k]);
            }
        }
        l1 *= inv;
        giou_loss *= inv;
    }

    // presence
    let mut pres = 0.0;
    if !presence.is_empty() {
        let inv = 1.0 / presence.len() as f64;
        for (k, pr) in presence.iter().enumerate() {
            let y = if pr.present { 1.0 } else { 0.0 };
            pres += PRESENCE_ALPHA * bce_logit(pr.logit, y);
            grad[5 * np + k] = PRESENCE_WEIGHT * inv * PRESENCE_ALPHA * (sigmoid(pr.logit) - y);
        }
        pres *= inv;
    }
    if matches.is_empty() && !flags.contains(&LossFlag::NoPositives) {
        flags.push(LossFlag::NoPositives);
    }

    Ok(LossReport::from_terms(
        vec![
            LossTerm {
                name: "cls",
                value: pos + neg,
                weight: CLS_WEIGHT,
            },
            LossTerm {
                name: "l1",
                value: l1,
                weight: L1_WEIGHT,
            },
            LossTerm {
                name: "giou",
                value: giou_loss,
                weight: GIOU_WEIGHT,
            },
            LossTerm {
                name: "presence",
                value: pres,
                weight: PRESENCE_WEIGHT,
            },
        ],
        grad,
        flags,
    ))
}
