//! Detection evaluation: NMS post-processing, IoU- and distance-mode AP with
//! ignore-aware matching, true-positive errors and the combined ODS score.

mod ap;
mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ap::{average_precision, RECALL_POINTS};
pub use matching::{match_dist_mode, match_group, match_iou_mode, MatchMode, MatchSet, Outcome, IGNORE_IOU};

use crate::codec::fuse_score;
use crate::error::{Error, Result};
use crate::geometry::{Box2D, Box3D};
use crate::io::DatasetFile;

pub const NMS_IOU: f64 = 0.6;
pub const SCORE_FLOOR: f64 = 0.05;
pub const MAX_DETECTIONS: usize = 100;
/// Distance threshold at which TP errors are measured.
pub const TP_ERROR_TAU: f64 = 1.0;
pub const NEAR_MAX: f64 = 10.0;
pub const MEDIUM_MAX: f64 = 35.0;
pub const RARE_MAX: usize = 5;
pub const COMMON_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: u64,
    pub image_id: u64,
    pub category: String,
    pub box3d: Box3D,
    pub box2d: Box2D,
    pub s2d: f64,
    pub s3d: f64,
    pub score: f64,
}

impl Detection {
    pub fn new(id: u64, image_id: u64, category: &str, box3d: Box3D, box2d: Box2D, s2d: f64, s3d: f64) -> Self {
        Self {
            id,
            image_id,
            category: category.to_string(),
            box3d,
            box2d,
            s2d,
            s3d,
            score: fuse_score(s2d, s3d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub id: u64,
    pub image_id: u64,
    pub category: String,
    pub box3d: Option<Box3D>,
    pub box2d: Box2D,
    pub ignore3d: bool,
}

/// Converts the annotations of a ground-truth file.
pub fn ground_truths(d: &DatasetFile) -> Result<Vec<GroundTruth>> {
    d.annotations
        .iter()
        .map(|a| {
            Ok(GroundTruth {
                id: a.id,
                image_id: a.image_id,
                category: a.category.clone(),
                box3d: if a.ignore3d { None } else { a.bbox3d()? },
                box2d: a.bbox2d()?,
                ignore3d: a.ignore3d,
            })
        })
        .collect()
}

/// Converts the annotations of a prediction file.
pub fn detections(d: &DatasetFile) -> Result<Vec<Detection>> {
    d.annotations
        .iter()
        .map(|a| {
            let schema = |reason: &str| Error::Schema {
                record: format!("annotation {}", a.id),
                reason: reason.into(),
            };
            let b3 = a.bbox3d()?.ok_or_else(|| schema("prediction without a 3D box"))?;
            let (s2d, s3d) = a.s2d.zip(a.s3d).ok_or_else(|| schema("prediction without scores"))?;
            Ok(Detection::new(a.id, a.image_id, &a.category, b3, a.bbox2d()?, s2d, s3d))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    /// Detections whose 2D score is below this are dropped before suppression.
    pub score_floor: f64,
    pub max_per_image: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: NMS_IOU,
            score_floor: SCORE_FLOOR,
            max_per_image: MAX_DETECTIONS,
        }
    }
}

fn by_score(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Per-(image, category) greedy 2D NMS by fused score, then a per-image cap.
/// Output is ordered by image id, then descending score.
pub fn nms(dets: Vec<Detection>, cfg: &NmsConfig) -> Vec<Detection> {
    let mut groups: BTreeMap<(u64, String), Vec<Detection>> = BTreeMap::new();
    for d in dets.into_iter().filter(|d| d.s2d >= cfg.score_floor) {
        groups.entry((d.image_id, d.category.clone())).or_default().push(d);
    }
    let mut per_image: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for ((image, _), mut group) in groups {
        group.sort_by(by_score);
        let mut kept: Vec<Detection> = Vec::new();
        for d in group {
            if kept.iter().all(|k| k.box2d.iou(&d.box2d) <= cfg.iou_threshold) {
                kept.push(d);
            }
        }
        per_image.entry(image).or_default().extend(kept);
    }
    per_image
        .into_values()
        .flat_map(|mut v| {
            v.sort_by(by_score);
            v.truncate(cfg.max_per_image);
            v
        })
        .collect()
}

pub fn ods(ap: f64, mate: f64, mase: f64, maoe: f64) -> f64 {
    (3.0 * ap + (1.0 - mate) + (1.0 - maoe) + (1.0 - mase)) / 6.0
}

/// `1 - IoU` of the two boxes' dimensions, centered and axis aligned, after
/// canonicalizing both.
pub fn scale_error(pred: &Box3D, gt: &Box3D) -> f64 {
    let p = pred.normalized().dims();
    let g = gt.normalized().dims();
    let inter = p.x.min(g.x) * p.y.min(g.y) * p.z.min(g.z);
    1.0 - inter / (p.x * p.y * p.z + g.x * g.y * g.z - inter)
}

/// Yaw difference of the canonicalized boxes in `[0, pi]`; symmetric
/// categories fold it further to `[0, pi/2]`.
pub fn orientation_error(pred: &Box3D, gt: &Box3D, symmetric: bool) -> f64 {
    let mut d = (pred.normalized().yaw() - gt.normalized().yaw()).rem_euclid(2.0 * PI);
    if d > PI {
        d = 2.0 * PI - d;
    }
    if symmetric {
        d = d.min(PI - d);
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpErrors {
    pub mate: f64,
    pub mase: f64,
    pub maoe: f64,
    pub count: usize,
    /// No true positives; the errors are set to 1.
    pub empty: bool,
}

/// Mean errors over matched `(pred, gt)` pairs from distance-mode matching at
/// threshold `tau`.
pub fn tp_errors<'a, I>(pairs: I, tau: f64) -> TpErrors
where
    I: IntoIterator<Item = (&'a Box3D, &'a Box3D, bool)>,
{
    let (mut t, mut s, mut o, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (p, g, symmetric) in pairs {
        t += (p.center() - g.center()).norm() / (tau * g.radius());
        s += scale_error(p, g);
        o += orientation_error(p, g, symmetric) / PI;
        n += 1;
    }
    if n == 0 {
        return TpErrors {
            mate: 1.0,
            mase: 1.0,
            maoe: 1.0,
            count: 0,
            empty: true,
        };
    }
    let n_f = n as f64;
    TpErrors {
        mate: t / n_f,
        mase: s / n_f,
        maoe: o / n_f,
        count: n,
        empty: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Rare,
    Common,
    Frequent,
}

impl Frequency {
    pub fn of(count: usize) -> Self {
        if count < RARE_MAX {
            Frequency::Rare
        } else if count <= COMMON_MAX {
            Frequency::Common
        } else {
            Frequency::Frequent
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Frequency::Rare => "rare",
            Frequency::Common => "common",
            Frequency::Frequent => "frequent",
        }
    }
}

/// Assigns each category its frequency group from its sample count.
pub fn frequency_split(counts: &BTreeMap<String, usize>) -> BTreeMap<String, Frequency> {
    counts.iter().map(|(c, &n)| (c.clone(), Frequency::of(n))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthBand {
    Near,
    Medium,
    Far,
}

impl DepthBand {
    pub const ALL: [DepthBand; 3] = [DepthBand::Near, DepthBand::Medium, DepthBand::Far];

    pub fn of(z: f64) -> Self {
        if z < NEAR_MAX {
            DepthBand::Near
        } else if z <= MEDIUM_MAX {
            DepthBand::Medium
        } else {
            DepthBand::Far
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DepthBand::Near => "near",
            DepthBand::Medium => "medium",
            DepthBand::Far => "far",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: MatchMode,
    /// Overrides the mode's default threshold grid.
    pub thresholds: Option<Vec<f64>>,
    pub nms: NmsConfig,
    pub symmetric_categories: BTreeSet<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: MatchMode::Dist,
            thresholds: None,
            nms: NmsConfig::default(),
            symmetric_categories: BTreeSet::new(),
        }
    }
}

impl EvalConfig {
    pub fn thresholds(&self) -> Vec<f64> {
        self.thresholds.clone().unwrap_or_else(|| self.mode.default_thresholds())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    /// `None` when the category has no valid ground truth.
    pub ap: Option<f64>,
    pub ap_per_threshold: Vec<f64>,
    pub num_gt: usize,
    pub num_ignore: usize,
    pub num_det: usize,
    pub frequency: Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLog {
    pub prediction_id: u64,
    pub image_id: u64,
    pub category: String,
    pub score: f64,
    /// GT id matched at each threshold, or "fp" / "neutral".
    pub outcomes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub config: EvalConfig,
    pub thresholds: Vec<f64>,
    pub per_category: BTreeMap<String, CategoryResult>,
    pub ap: f64,
    /// AP restricted to each depth band; `None` when no category has a valid GT in it.
    pub ap_by_depth: BTreeMap<DepthBand, Option<f64>>,
    pub ap_by_frequency: BTreeMap<Frequency, Option<f64>>,
    pub tp_errors: TpErrors,
    pub ods: f64,
    pub matches: Vec<MatchLog>,
}

struct Group<'a> {
    category: &'a str,
    dets: Vec<&'a Detection>,
    gts: Vec<&'a GroundTruth>,
    sets: Vec<MatchSet>,
    tp_set: MatchSet,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Evaluates predictions against ground truth. Every prediction must reference
/// an image of the ground-truth file.
pub fn evaluate(gt_file: &DatasetFile, pred_file: &DatasetFile, cfg: &EvalConfig) -> Result<EvalResult> {
    gt_file.validate()?;
    pred_file.validate_predictions()?;
    let images: BTreeSet<u64> = gt_file.images.iter().map(|i| i.id).collect();
    if let Some(a) = pred_file.annotations.iter().find(|a| !images.contains(&a.image_id)) {
        return Err(Error::Schema {
            record: format!("prediction {}", a.id),
            reason: format!("image {} is not in the ground truth", a.image_id),
        });
    }
    let gts = ground_truths(gt_file)?;
    let dets = nms(detections(pred_file)?, &cfg.nms);
    evaluate_sets(&gts, &dets, cfg)
}

/// Evaluates already post-processed detections.
pub fn evaluate_sets(gts: &[GroundTruth], dets: &[Detection], cfg: &EvalConfig) -> Result<EvalResult> {
    let thresholds = cfg.thresholds();
    if thresholds.is_empty() || thresholds.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(Error::Format("thresholds must be positive and nonempty".into()));
    }

    let mut keyed: BTreeMap<(&str, u64), (Vec<&Detection>, Vec<&GroundTruth>)> = BTreeMap::new();
    for d in dets {
        keyed.entry((d.category.as_str(), d.image_id)).or_default().0.push(d);
    }
    for g in gts {
        keyed.entry((g.category.as_str(), g.image_id)).or_default().1.push(g);
    }
    let groups: Vec<Group> = keyed
        .into_par_iter()
        .map(|((category, _), (mut dets, gts))| {
            dets.sort_by(|a, b| by_score(a, b));
            let sets = thresholds.iter().map(|&t| match_group(cfg.mode, &dets, &gts, t)).collect();
            let tp_set = match_dist_mode(&dets, &gts, TP_ERROR_TAU);
            Group {
                category,
                dets,
                gts,
                sets,
                tp_set,
            }
        })
        .collect();

    let mut by_cat: BTreeMap<&str, Vec<&Group>> = BTreeMap::new();
    for g in &groups {
        by_cat.entry(g.category).or_default().push(g);
    }

    let valid = |g: &GroundTruth| !g.ignore3d && g.box3d.is_some();
    // AP per threshold for one category; with a band, TPs on out-of-band GTs and
    // FPs centered out of band are neutral
    let category_curve = |cat_groups: &[&Group], band: Option<DepthBand>| -> Option<Vec<f64>> {
        let in_band = |z: f64| band.is_none_or(|b| DepthBand::of(z) == b);
        let num_pos = cat_groups
            .iter()
            .flat_map(|g| g.gts.iter())
            .filter(|g| valid(g) && in_band(g.box3d.unwrap().center().z))
            .count();
        if num_pos == 0 {
            return None;
        }
        Some(
            (0..thresholds.len())
                .map(|t| {
                    let mut ranked: Vec<(&Detection, bool)> = Vec::new();
                    for g in cat_groups {
                        for (d, o) in g.dets.iter().zip(&g.sets[t].outcomes) {
                            match *o {
                                Outcome::Neutral => {}
                                Outcome::TruePositive(j) => {
                                    if in_band(g.gts[j].box3d.unwrap().center().z) {
                                        ranked.push((d, true));
                                    }
                                }
                                Outcome::FalsePositive => {
                                    if in_band(d.box3d.center().z) {
                                        ranked.push((d, false));
                                    }
                                }
                            }
                        }
                    }
                    ranked.sort_by(|a, b| by_score(a.0, b.0).then(a.0.image_id.cmp(&b.0.image_id)));
                    let hits: Vec<bool> = ranked.iter().map(|r| r.1).collect();
                    average_precision(&hits, num_pos).unwrap_or(0.0)
                })
                .collect(),
        )
    };

    let mut per_category = BTreeMap::new();
    for (cat, cg) in &by_cat {
        let num_gt = cg.iter().flat_map(|g| g.gts.iter()).filter(|g| valid(g)).count();
        let num_ignore = cg.iter().map(|g| g.gts.len()).sum::<usize>() - num_gt;
        let ap_per_threshold = category_curve(cg, None).unwrap_or_default();
        per_category.insert(
            cat.to_string(),
            CategoryResult {
                ap: mean(ap_per_threshold.iter().copied()),
                ap_per_threshold,
                num_gt,
                num_ignore,
                num_det: cg.iter().map(|g| g.dets.len()).sum(),
                frequency: Frequency::of(num_gt),
            },
        );
    }

    let ap = mean(per_category.values().filter_map(|c| c.ap)).unwrap_or(0.0);
    let ap_by_depth = DepthBand::ALL
        .iter()
        .map(|&b| {
            let per_cat = by_cat.values().filter_map(|cg| category_curve(cg, Some(b)).and_then(|c| mean(c.into_iter())));
            (b, mean(per_cat))
        })
        .collect();
    let ap_by_frequency = [Frequency::Rare, Frequency::Common, Frequency::Frequent]
        .iter()
        .map(|&f| {
            (
                f,
                mean(per_category.values().filter(|c| c.frequency == f).filter_map(|c| c.ap)),
            )
        })
        .collect();

    let pairs: Vec<(&Box3D, &Box3D, bool)> = groups
        .iter()
        .flat_map(|g| {
            let symmetric = cfg.symmetric_categories.contains(g.category);
            g.dets.iter().zip(&g.tp_set.outcomes).filter_map(move |(d, o)| match *o {
                Outcome::TruePositive(j) => Some((&d.box3d, g.gts[j].box3d.as_ref().unwrap(), symmetric)),
                _ => None,
            })
        })
        .collect();
    let tp = tp_errors(pairs, TP_ERROR_TAU);

    let matches = groups
        .iter()
        .flat_map(|g| {
            g.dets.iter().enumerate().map(move |(i, d)| MatchLog {
                prediction_id: d.id,
                image_id: d.image_id,
                category: d.category.clone(),
                score: d.score,
                outcomes: g
                    .sets
                    .iter()
                    .map(|s| match s.outcomes[i] {
                        Outcome::TruePositive(j) => g.gts[j].id.to_string(),
                        Outcome::FalsePositive => "fp".into(),
                        Outcome::Neutral => "neutral".into(),
                    })
                    .collect(),
            })
        })
        .collect();

    Ok(EvalResult {
        config: cfg.clone(),
        ods: ods(ap, tp.mate, tp.mase, tp.maoe),
        thresholds,
        per_category,
        ap,
        ap_by_depth,
        ap_by_frequency,
        tp_errors: tp,
        matches,
    })
}

impl EvalResult {
    /// Fixed-width text table: one row per category, then the summary.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mode {} | thresholds {} ({:.2}..{:.2})",
            self.config.mode.name(),
            self.thresholds.len(),
            self.thresholds[0],
            self.thresholds[self.thresholds.len() - 1]
        );
        let _ = writeln!(s, "{:<24} {:>8} {:>6} {:>6} {:>6} {:>9}", "category", "AP", "gt", "ignore", "det", "split");
        for (c, r) in &self.per_category {
            let _ = writeln!(
                s,
                "{:<24} {:>8} {:>6} {:>6} {:>6} {:>9}",
                c,
                pct(r.ap),
                r.num_gt,
                r.num_ignore,
                r.num_det,
                r.frequency.name()
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>8} {:>8}", "AP", "mATE", "mASE", "mAOE", "ODS");
        let t = &self.tp_errors;
        let _ = writeln!(
            s,
            "{:>8.1} {:>8.3} {:>8.3} {:>8.3} {:>8.1}",
            100.0 * self.ap,
            t.mate,
            t.mase,
            t.maoe,
            100.0 * self.ods
        );
        if t.empty {
            let _ = writeln!(s, "no true positives: errors set to 1");
        }
        let _ = writeln!(
            s,
            "AP near {} medium {} far {} | rare {} common {} frequent {}",
            pct(self.ap_by_depth[&DepthBand::Near]),
            pct(self.ap_by_depth[&DepthBand::Medium]),
            pct(self.ap_by_depth[&DepthBand::Far]),
            pct(self.ap_by_frequency[&Frequency::Rare]),
            pct(self.ap_by_frequency[&Frequency::Common]),
            pct(self.ap_by_frequency[&Frequency::Frequent]),
        );
        s
    }
}
