//! Reference implementations of the training losses, each returning its value,
//! a per-term breakdown and an analytic gradient.
//!
//! These are meant as test oracles for learning code: every gradient here is
//! checked against central finite differences in the test suite.

mod camera_ray;
mod confidence;
mod depth;
mod detection2d;
mod pointmap;
mod regression;

pub use camera_ray::camera_ray_mse;
pub use confidence::{conf_loss, conf_loss_with_targets, soft_target, CONF_ALPHA, FOCAL_GAMMA, POSITIVE_WEIGHT};
pub use depth::{depth_l1, depth_validity, mask_bce, silog, MaskState, MASK_BCE_WEIGHT, SILOG_LAMBDA};
pub use detection2d::{loss_2d, Loss2dConfig, Presence, ScoredBox2D};
pub use pointmap::{downsample_point_map, global_pointmap_alignment, ALIGNMENT_RESOLUTION};
pub use regression::l3d_regression;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFlag {
    NoPositives,
    NoNegatives,
    EmptyValidSet,
    Underdetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossTerm {
    pub name: &'static str,
    /// Unweighted term value.
    pub value: f64,
    pub weight: f64,
}

/// Loss value, its weighted breakdown and the gradient of `value` with respect
/// to the differentiable inputs (layout documented on each loss).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub value: f64,
    pub terms: Vec<LossTerm>,
    pub gradient: Vec<f64>,
    pub flags: Vec<LossFlag>,
}

impl LossReport {
    fn from_terms(terms: Vec<LossTerm>, gradient: Vec<f64>, flags: Vec<LossFlag>) -> Self {
        let value = terms.iter().map(|t| t.weight * t.value).sum();
        Self {
            value,
            terms,
            gradient,
            flags,
        }
    }

    fn single(name: &'static str, value: f64, weight: f64, gradient: Vec<f64>, flags: Vec<LossFlag>) -> Self {
        Self::from_terms(vec![LossTerm { name, value, weight }], gradient, flags)
    }

    pub fn term(&self, name: &str) -> Option<&LossTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn has_flag(&self, flag: LossFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Components of the auxiliary geometry loss with their fixed weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeomTerm {
    DepthL1,
    Silog,
    GlobalAlignment,
    MaskBce,
    CameraRay,
}

impl GeomTerm {
    pub fn weight(self) -> f64 {
        match self {
            GeomTerm::DepthL1 => 1.0,
            GeomTerm::Silog => 0.5,
            GeomTerm::GlobalAlignment => 10.0,
            GeomTerm::MaskBce => MASK_BCE_WEIGHT,
            GeomTerm::CameraRay => 1.0,
        }
    }
}

pub const GEOM_SCALE: f64 = 5.0;
pub const GEOM_TERM_CLIP: f64 = 10.0;

/// Clips each raw (unweighted) term at 10, applies its weight, sums and scales by 5.
pub fn clip_and_scale_geom(terms: &[(GeomTerm, f64)]) -> f64 {
    GEOM_SCALE
        * terms
            .iter()
            .map(|(t, v)| v.min(GEOM_TERM_CLIP) * t.weight())
            .sum::<f64>()
}

pub const O2M_WEIGHT: f64 = 2.0;
pub const O2M_CLIP: f64 = 150.0;

/// Scales a one-to-many branch loss by 2 and clips the result at 150.
pub fn scale_o2m(report: &LossReport) -> LossReport {
    let scaled = O2M_WEIGHT * report.value;
    let clipped = scaled > O2M_CLIP;
    let factor = if clipped { 0.0 } else { O2M_WEIGHT };
    LossReport {
        value: scaled.min(O2M_CLIP),
        terms: report.terms.clone(),
        gradient: report.gradient.iter().map(|g| g * factor).collect(),
        flags: report.flags.clone(),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, i.e. `-ln(1 - sigmoid(x))`.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy of `sigmoid(logit)` against target `t`, computed on the logit.
pub(crate) fn bce_logit(logit: f64, t: f64) -> f64 {
    softplus(logit) - t * logit
}
