//! Candidate generation over a dataset: every annotated object is lifted from
//! its depth map and mask, then run through the candidate filters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{filter_candidate, DatasetClass, FilterVerdict, SizeSpec};
use crate::io::{read_mask, Annotation, DatasetFile, DepthMap, ImageRecord};
use crate::lift::{
    lift_object, object_seed, scene_vertical, Generator, LiftConfig, LiftStages, Mask2D, SceneCloud, TranslationLosses,
};

pub const DEPTH_EXTENSION: &str = "depth";
pub const MASK_EXTENSION: &str = "mask";

/// `image.depth` resolved against `dataset_dir`, else `<depth_dir>/<id>.depth`.
pub fn depth_path(image: &ImageRecord, dataset_dir: &Path, depth_dir: Option<&Path>) -> PathBuf {
    match (&image.depth, depth_dir) {
        (Some(p), _) => dataset_dir.join(p),
        (None, Some(d)) => d.join(format!("{}.{DEPTH_EXTENSION}", image.id)),
        (None, None) => dataset_dir.join(format!("{}.{DEPTH_EXTENSION}", image.id)),
    }
}

pub fn mask_path(masks_dir: &Path, annotation_id: u64) -> PathBuf {
    masks_dir.join(format!("{annotation_id}.{MASK_EXTENSION}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Optimized,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub annotation_id: u64,
    pub image_id: u64,
    pub category: String,
    pub status: RecordStatus,
    /// Lifted and passed every filter.
    pub accepted: bool,
    /// Set unless the candidate is accepted.
    pub ignore3d: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub losses: Option<TranslationLosses>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occlusion_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<LiftStages>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<FilterVerdict>,
}

impl CandidateRecord {
    fn failed(a: &Annotation, reason: String) -> Self {
        Self {
            annotation_id: a.id,
            image_id: a.image_id,
            category: a.category.clone(),
            status: RecordStatus::Failed,
            accepted: false,
            ignore3d: true,
            error: Some(reason),
            generator: None,
            center: None,
            dims: None,
            quaternion: None,
            losses: None,
            occlusion_ratio: None,
            stages: None,
            verdict: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub lift: LiftConfig,
    pub class: DatasetClass,
    pub seed: u64,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self {
            lift: LiftConfig::default(),
            class: DatasetClass::Standard,
            seed: 0,
        }
    }
}

/// Lifts the annotations of one image. A `None` mask (or any lift error)
/// yields a failed record; the other objects are unaffected. Records follow
/// the order of `anns`.
pub fn annotate_image(
    image: &ImageRecord,
    anns: &[&Annotation],
    depth: &DepthMap,
    masks: &[std::result::Result<Mask2D, String>],
    specs: &BTreeMap<String, SizeSpec>,
    cfg: &AnnotateConfig,
) -> Result<Vec<CandidateRecord>> {
    if anns.len() != masks.len() {
        return Err(Error::ShapeMismatch(format!("{} annotations but {} masks", anns.len(), masks.len())));
    }
    let camera = image.camera()?;
    let cloud = SceneCloud::from_depth(depth, &camera)?;
    let vertical = scene_vertical(&cloud, &cfg.lift);
    Ok(anns
        .par_iter()
        .zip(masks.par_iter())
        .map(|(a, mask)| {
            let mask = match mask {
                Ok(m) => m,
                Err(e) => return CandidateRecord::failed(a, e.clone()),
            };
            let lifted = a.bbox2d().and_then(|b2| {
                let seed = object_seed(cfg.seed, a.id);
                lift_object(&cloud, depth, mask, &b2, &vertical, &cfg.lift, seed).map(|o| (o, b2))
            });
            match lifted {
                Err(e) => CandidateRecord::failed(a, e.to_string()),
                Ok((o, b2)) => {
                    let verdict = filter_candidate(&o.candidate, &b2, &camera, specs.get(&a.category), cfg.class);
                    let b = o.candidate.bbox;
                    let (c, d) = (b.center(), b.dims());
                    CandidateRecord {
                        annotation_id: a.id,
                        image_id: a.image_id,
                        category: a.category.clone(),
                        status: RecordStatus::Optimized,
                        accepted: verdict.passed,
                        ignore3d: !verdict.passed,
                        error: None,
                        generator: Some(o.candidate.generator),
                        center: Some([c.x, c.y, c.z]),
                        dims: Some([d.x, d.y, d.z]),
                        quaternion: Some(b.wxyz()),
                        losses: o.candidate.losses,
                        occlusion_ratio: o.candidate.occlusion_ratio,
                        stages: Some(o.stages),
                        verdict: Some(verdict),
                    }
                }
            }
        })
        .collect())
}

/// Lifts every annotation of `dataset`. Depth maps are required; a missing or
/// unreadable mask only fails its own object.
pub fn annotate_dataset(
    dataset: &DatasetFile,
    dataset_dir: &Path,
    depth_dir: Option<&Path>,
    masks_dir: &Path,
    specs: &BTreeMap<String, SizeSpec>,
    cfg: &AnnotateConfig,
) -> Result<Vec<CandidateRecord>> {
    dataset.validate()?;
    let by_image = dataset.by_image();
    let mut out = Vec::with_capacity(dataset.annotations.len());
    for image in &dataset.images {
        let Some(anns) = by_image.get(&image.id) else { continue };
        let depth = DepthMap::read(&depth_path(image, dataset_dir, depth_dir))?;
        let masks: Vec<_> = anns
            .iter()
            .map(|a| read_mask(&mask_path(masks_dir, a.id)).map_err(|e| e.to_string()))
            .collect();
        out.extend(annotate_image(image, anns, &depth, &masks, specs, cfg)?);
    }
    Ok(out)
}
