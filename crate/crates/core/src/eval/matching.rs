use serde::{Deserialize, Serialize};

use super::{Detection, GroundTruth};
use crate::geometry::iou3d;

/// 2D IoU at or above which an unmatched detection on an ignore region is neutral.
pub const IGNORE_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// 3D IoU ≥ τ.
    Iou,
    /// Center distance < τ · GT radius.
    Dist,
}

impl MatchMode {
    /// 0.05..=0.50 for IoU, 0.50..=1.00 for distance, step 0.05.
    pub fn default_thresholds(self) -> Vec<f64> {
        let range = match self {
            MatchMode::Iou => 1..=10,
            MatchMode::Dist => 10..=20,
        };
        range.map(|k| k as f64 / 20.0).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            MatchMode::Iou => "iou",
            MatchMode::Dist => "dist",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "gt")]
pub enum Outcome {
    /// Index into the group's GT slice.
    TruePositive(usize),
    FalsePositive,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    /// One outcome per detection, in the input order.
    pub outcomes: Vec<Outcome>,
    /// Valid (non-ignore) GT count of the group.
    pub num_valid: usize,
}

impl MatchSet {
    pub fn true_positives(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, Outcome::TruePositive(_))).count()
    }
}

fn is_valid(g: &GroundTruth) -> bool {
    !g.ignore3d && g.box3d.is_some()
}

/// Greedy matching of one (image, category) group. `dets` must be sorted by
/// descending score. `quality(det, gt)` returns a higher-is-better key when the
/// pair passes the threshold.
fn greedy(dets: &[&Detection], gts: &[&GroundTruth], quality: impl Fn(&Detection, &GroundTruth) -> Option<f64>) -> MatchSet {
    let mut taken = vec![false; gts.len()];
    let outcomes = dets
        .iter()
        .map(|d| {
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] || !is_valid(g) {
                    continue;
                }
                if let Some(q) = quality(d, g) {
                    if best.is_none_or(|(b, _)| q > b) {
                        best = Some((q, j));
                    }
                }
            }
            if let Some((_, j)) = best {
                taken[j] = true;
                return Outcome::TruePositive(j);
            }
            let on_ignore = gts
                .iter()
                .any(|g| !is_valid(g) && d.box2d.iou(&g.box2d) >= IGNORE_IOU);
            if on_ignore {
                Outcome::Neutral
            } else {
                Outcome::FalsePositive
            }
        })
        .collect();
    MatchSet {
        outcomes,
        num_valid: gts.iter().filter(|g| is_valid(g)).count(),
    }
}

pub fn match_iou_mode(dets: &[&Detection], gts: &[&GroundTruth], tau: f64) -> MatchSet {
    greedy(dets, gts, |d, g| {
        let iou = iou3d(&d.box3d, g.box3d.as_ref()?);
        (iou >= tau).then_some(iou)
    })
}

pub fn match_dist_mode(dets: &[&Detection], gts: &[&GroundTruth], tau: f64) -> MatchSet {
    greedy(dets, gts, |d, g| {
        let b = g.box3d.as_ref()?;
        let dist = (d.box3d.center() - b.center()).norm();
        (dist < tau * b.radius()).then_some(-dist / b.radius())
    })
}

pub fn match_group(mode: MatchMode, dets: &[&Detection], gts: &[&GroundTruth], tau: f64) -> MatchSet {
    match mode {
        MatchMode::Iou => match_iou_mode(dets, gts, tau),
        MatchMode::Dist => match_dist_mode(dets, gts, tau),
    }
}
