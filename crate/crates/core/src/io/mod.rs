//! File formats, the evaluation-split sampler and the synthetic scene generator.

mod dataset;
mod depth;
mod mask;
mod sampler;
mod sizespec;
mod synth;

pub use dataset::{
    read_dataset, read_predictions, round_significant, to_canonical_json, write_dataset, write_predictions, Annotation,
    DatasetFile, ImageRecord, Intrinsics, Quality, DATASET_VERSION, QUATERNION_TOLERANCE, SIGNIFICANT_DIGITS,
};
pub use sampler::{sample_eval_split, sampler_depth_band, SampleResult, SamplerTargets, DEPTH_BAND_NAMES};
pub use sizespec::{parse_size_specs, read_size_specs};
pub use depth::{DepthMap, DEPTH_MAGIC, DEPTH_VERSION};
pub use synth::{add_depth_noise, render, synth_scene, Plane, Rendering, SynthObject, SynthScene, SynthSpec, MAX_PLACEMENT_ATTEMPTS, MAX_RENDER_DEPTH};
pub use mask::{mask_from_bytes, mask_to_bytes, read_mask, write_mask, MASK_MAGIC, MASK_VERSION};

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::lift::SceneCloud;

/// Writes through a temporary file in the destination directory and renames it
/// into place, so readers never observe a partial file.
pub fn atomic_write<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Backprojects all valid pixels of `depth`; see [`SceneCloud::from_depth`].
pub fn cloud_from_depth(depth: &DepthMap, camera: &CameraModel) -> Result<SceneCloud> {
    SceneCloud::from_depth(depth, camera)
}
