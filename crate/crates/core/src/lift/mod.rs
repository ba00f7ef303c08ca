//! Geometric 2D-to-3D lifting: object points from a depth map and mask,
//! outlier removal, density clustering, gravity-aligned box fitting, translation
//! refinement and rotation correction.

mod cloud;
mod cluster;
mod fit;
mod optimize;
mod orient;

pub use cloud::{extract_object_points, Mask2D, SceneCloud};
pub use cluster::{
    dbscan, largest_cluster, mean_knn_distance, remove_outliers, OutlierResult, CLUSTER_EPS_FACTOR,
    CLUSTER_MIN_POINTS, OUTLIER_NEIGHBORS, OUTLIER_STD_RATIO,
};
pub use fit::{fit_oriented_box, percentile, vertical_frame, FitConfig, MIN_FIT_POINTS};
pub use optimize::{
    adaptive_select, anchor_weights, height_fallback, height_scale_factor, inclusion_loss, optimize_translation,
    projection_loss, sample_anchors, tightness_loss, translation_losses, Anchor, AnchorWeights, OptimizerConfig,
    Selection, TranslationLosses, TranslationResult,
};
pub use orient::{
    correct_rotation, correct_rotation_with_vertical, estimate_vertical, VerticalEstimate, DEFAULT_VERTICAL,
    MAX_GROUND_TILT_DEG,
};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::Result;
use crate::geometry::{Box2D, Box3D};
use crate::io::DepthMap;

/// Source of a 3D box candidate. Only [`Generator::RansacPca`] is produced here;
/// the others tag candidates imported from external models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    #[serde(rename = "3D-MOOD")]
    ThreeDMood,
    #[serde(rename = "DetAny3D")]
    DetAny3D,
    #[serde(rename = "SAM-3D")]
    Sam3D,
    #[serde(rename = "LabelAny3D")]
    LabelAny3D,
    #[serde(rename = "RANSAC-PCA")]
    RansacPca,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::ThreeDMood => "3D-MOOD",
            Generator::DetAny3D => "DetAny3D",
            Generator::Sam3D => "SAM-3D",
            Generator::LabelAny3D => "LabelAny3D",
            Generator::RansacPca => "RANSAC-PCA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Raw,
    Optimized,
    Filtered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftCandidate {
    pub bbox: Box3D,
    pub generator: Generator,
    pub losses: Option<TranslationLosses>,
    pub status: CandidateStatus,
    /// Fraction of the box's visible surface hidden behind nearer depth.
    pub occlusion_ratio: Option<f64>,
}

impl LiftCandidate {
    pub fn raw(bbox: Box3D, generator: Generator) -> Self {
        Self {
            bbox,
            generator,
            losses: None,
            status: CandidateStatus::Raw,
            occlusion_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    pub outlier_neighbors: usize,
    pub outlier_std_ratio: f64,
    pub cluster_eps_factor: f64,
    pub cluster_min_points: usize,
    /// Vertical used when the ground plane is not trusted, camera coordinates.
    pub gravity: [f64; 3],
    pub estimate_gravity: bool,
    /// Depth margin (m) before a nearer surface counts as occluding.
    pub occlusion_margin: f64,
    pub fit: FitConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            outlier_neighbors: OUTLIER_NEIGHBORS,
            outlier_std_ratio: OUTLIER_STD_RATIO,
            cluster_eps_factor: CLUSTER_EPS_FACTOR,
            cluster_min_points: CLUSTER_MIN_POINTS,
            gravity: [0.0, -1.0, 0.0],
            estimate_gravity: true,
            occlusion_margin: 0.05,
            fit: FitConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Per-stage measurements of one lift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftStages {
    pub object_points: usize,
    pub outliers_removed: usize,
    pub outlier_passthrough: bool,
    pub cluster_points: usize,
    pub anchors_uniform: bool,
    pub grid_evaluations: usize,
    pub local_iterations: usize,
    pub optimizer_diverged: bool,
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftOutcome {
    pub candidate: LiftCandidate,
    pub stages: LiftStages,
}

/// Fraction of the pixels whose ray hits `b` where the depth map shows a
/// surface nearer than the hit by more than `margin`.
pub fn occlusion_ratio(b: &Box3D, depth: &DepthMap, camera: &CameraModel, margin: f64) -> f64 {
    let Some(p) = camera.project_box(b, 1e-3) else {
        return 0.0;
    };
    let x0 = p.x1.floor().max(0.0) as usize;
    let y0 = p.y1.floor().max(0.0) as usize;
    let x1 = (p.x2.ceil().max(0.0) as usize).min(depth.width);
    let y1 = (p.y2.ceil().max(0.0) as usize).min(depth.height);
    let (mut hits, mut hidden) = (0usize, 0usize);
    let origin = Vector3::zeros();
    for y in y0..y1 {
        for x in x0..x1 {
            let ray = camera.homogeneous_ray(x as f64 + 0.5, y as f64 + 0.5);
            // the ray has unit z, so the hit parameter is the z-depth
            if let Some(z) = b.ray_hit(&origin, &ray) {
                hits += 1;
                let d = depth.get(x, y) as f64;
                if d > 0.0 && d < z - margin {
                    hidden += 1;
                }
            }
        }
    }
    if hits == 0 {
        0.0
    } else {
        hidden as f64 / hits as f64
    }
}

/// Runs the full geometric lift for one annotated object.
pub fn lift_object(
    cloud: &SceneCloud,
    depth: &DepthMap,
    mask: &Mask2D,
    box2d: &Box2D,
    vertical: &Vector3<f64>,
    cfg: &LiftConfig,
    seed: u64,
) -> Result<LiftOutcome> {
    cfg.optimizer.validate()?;
    let camera = &cloud.camera;
    let pts = extract_object_points(cloud, mask)?;
    let object_points = pts.len();
    let cleaned = remove_outliers(&pts, cfg.outlier_neighbors, cfg.outlier_std_ratio);
    let cluster = largest_cluster(&cleaned.points, cfg.cluster_eps_factor, cfg.cluster_min_points)?;
    let fitted = fit_oriented_box(&cluster, vertical, &cfg.fit, seed)?;

    let w = anchor_weights(&cluster, cfg.optimizer.mahalanobis_alpha);
    let anchors = sample_anchors(&cluster, &w.weights, cfg.optimizer.anchor_count, seed ^ 0x5DEE_CE66)?;
    let opt = optimize_translation(&fitted, &anchors, box2d, camera, &cfg.optimizer)?;
    let fallback = height_fallback(&opt.bbox, box2d, camera).unwrap_or(opt.bbox);
    let (selected, selection) = adaptive_select(&opt.bbox, &fallback, box2d, camera, cfg.optimizer.iou_switch);
    let corrected = correct_rotation_with_vertical(&selected, vertical, box2d, camera).normalized();

    let losses = translation_losses(&corrected, &anchors, box2d, camera, &cfg.optimizer);
    Ok(LiftOutcome {
        candidate: LiftCandidate {
            bbox: corrected,
            generator: Generator::RansacPca,
            losses: Some(losses),
            status: CandidateStatus::Optimized,
            occlusion_ratio: Some(occlusion_ratio(&corrected, depth, camera, cfg.occlusion_margin)),
        },
        stages: LiftStages {
            object_points,
            outliers_removed: cleaned.removed,
            outlier_passthrough: cleaned.passthrough,
            cluster_points: cluster.len(),
            anchors_uniform: w.singular,
            grid_evaluations: opt.grid_evaluations,
            local_iterations: opt.iterations,
            optimizer_diverged: opt.diverged,
            selection,
        },
    })
}

/// Scene vertical per the configuration: the ground-plane estimate when
/// enabled and accepted, otherwise the configured gravity.
pub fn scene_vertical(cloud: &SceneCloud, cfg: &LiftConfig) -> Vector3<f64> {
    let fixed = Vector3::from(cfg.gravity);
    if cfg.estimate_gravity {
        let e = estimate_vertical(&cloud.points);
        if e.from_ground {
            return e.vertical;
        }
    }
    fixed
}

/// Deterministic per-object seed derived from a run seed (splitmix64 step).
pub fn object_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lifts every `(mask, box2d)` object of one scene in parallel. Results are in
/// input order and independent of the thread count.
pub fn lift_scene(
    cloud: &SceneCloud,
    depth: &DepthMap,
    objects: &[(Mask2D, Box2D)],
    cfg: &LiftConfig,
    seed: u64,
) -> Vec<Result<LiftOutcome>> {
    let vertical = scene_vertical(cloud, cfg);
    objects
        .par_iter()
        .enumerate()
        .map(|(i, (mask, b2))| lift_object(cloud, depth, mask, b2, &vertical, cfg, object_seed(seed, i as u64)))
        .collect()
}
