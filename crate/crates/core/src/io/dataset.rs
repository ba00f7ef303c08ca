//! Annotation and prediction files: one versioned JSON document per dataset,
//! written in a canonical form (sorted keys, sorted ids, 9 significant digits).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{Box2D, Box3D};

pub const DATASET_VERSION: u32 = 1;
/// Accepted deviation of a stored quaternion from unit norm.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;
pub const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    /// Depth file, relative to the dataset file's directory unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
}

impl ImageRecord {
    pub fn camera(&self) -> Result<CameraModel> {
        let k = &self.intrinsics;
        CameraModel::new(k.fx, k.fy, k.cx, k.cy, self.width, self.height)
    }

    pub fn from_camera(id: u64, camera: &CameraModel) -> Self {
        Self {
            id,
            width: camera.width,
            height: camera.height,
            intrinsics: Intrinsics {
                fx: camera.fx,
                fy: camera.fy,
                cx: camera.cx,
                cy: camera.cy,
            },
            depth: None,
            source: None,
            scene: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    GoodFit,
    Acceptable,
    Unacceptable,
}

/// One object. Ground-truth files leave `s2d`/`s3d` empty; prediction files
/// fill both and always carry the 3D fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category: String,
    /// `[x1, y1, x2, y2]` in pixels.
    pub box2d: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[f64; 3]>,
    /// Scalar-first `(w, x, y, z)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    #[serde(default)]
    pub ignore3d: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s2d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s3d: Option<f64>,
}

impl Annotation {
    /// A valid 3D annotation.
    pub fn with_box(id: u64, image_id: u64, category: &str, box2d: &Box2D, b: &Box3D) -> Self {
        let c = b.center();
        let d = b.dims();
        Self {
            id,
            image_id,
            category: category.to_string(),
            box2d: [box2d.x1, box2d.y1, box2d.x2, box2d.y2],
            center: Some([c.x, c.y, c.z]),
            dims: Some([d.x, d.y, d.z]),
            quaternion: Some(b.wxyz()),
            ignore3d: false,
            quality: None,
            s2d: None,
            s3d: None,
        }
    }

    /// A 2D-only annotation flagged ignore3d.
    pub fn ignored(id: u64, image_id: u64, category: &str, box2d: &Box2D) -> Self {
        Self {
            id,
            image_id,
            category: category.to_string(),
            box2d: [box2d.x1, box2d.y1, box2d.x2, box2d.y2],
            center: None,
            dims: None,
            quaternion: None,
            ignore3d: true,
            quality: None,
            s2d: None,
            s3d: None,
        }
    }

    pub fn bbox2d(&self) -> Result<Box2D> {
        let [x1, y1, x2, y2] = self.box2d;
        Box2D::new(x1, y1, x2, y2)
    }

    pub fn has_3d(&self) -> bool {
        self.center.is_some() || self.dims.is_some() || self.quaternion.is_some()
    }

    /// The 3D box, `None` when the 3D fields are absent.
    pub fn bbox3d(&self) -> Result<Option<Box3D>> {
        match (self.center, self.dims, self.quaternion) {
            (None, None, None) => Ok(None),
            (Some(c), Some(d), Some(q)) => Ok(Some(Box3D::from_wxyz(
                Vector3::from(c),
                Vector3::from(d),
                q,
                QUATERNION_TOLERANCE,
            )?)),
            _ => Err(Error::InvalidBox("center, dims and quaternion must be given together".into())),
        }
    }

    fn check(&self, prediction: bool) -> std::result::Result<(), String> {
        self.bbox2d().map_err(|e| e.to_string())?;
        if self.category.is_empty() {
            return Err("empty category".into());
        }
        let b3 = self.bbox3d().map_err(|e| e.to_string())?;
        for (name, s) in [("s2d", self.s2d), ("s3d", self.s3d)] {
            if let Some(s) = s {
                if !(0.0..=1.0).contains(&s) {
                    return Err(format!("{name} = {s} is outside [0, 1]"));
                }
            }
        }
        if prediction {
            if self.s2d.is_none() || self.s3d.is_none() {
                return Err("predictions need s2d and s3d".into());
            }
            if b3.is_none() {
                return Err("predictions need center, dims and quaternion".into());
            }
        } else {
            let expect = b3.is_none() || self.quality == Some(Quality::Unacceptable);
            if self.ignore3d != expect {
                return Err(format!(
                    "ignore3d is {} but the 3D fields are {} and quality is {:?}",
                    self.ignore3d,
                    if b3.is_some() { "present" } else { "absent" },
                    self.quality
                ));
            }
        }
        Ok(())
    }
}

/// Ground truth (or predictions) for a set of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub version: u32,
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<Annotation>,
    /// Effective configuration of the run that wrote the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

impl Default for DatasetFile {
    fn default() -> Self {
        Self {
            version: DATASET_VERSION,
            images: Vec::new(),
            annotations: Vec::new(),
            config: None,
        }
    }
}

impl DatasetFile {
    /// Checks the ground-truth invariants and reports the first offending record.
    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    /// Checks a prediction file: scores and 3D fields required. An empty image
    /// list skips the image-reference check.
    pub fn validate_predictions(&self) -> Result<()> {
        self.check(true)
    }

    fn check(&self, prediction: bool) -> Result<()> {
        if self.version != DATASET_VERSION {
            return Err(schema("file", format!("unsupported version {}", self.version)));
        }
        let mut ids = BTreeSet::new();
        for im in &self.images {
            if !ids.insert(im.id) {
                return Err(schema(format!("image {}", im.id), "duplicate id"));
            }
            im.camera().map_err(|e| schema(format!("image {}", im.id), e.to_string()))?;
        }
        let mut ann_ids = BTreeSet::new();
        for a in &self.annotations {
            let rec = format!("annotation {}", a.id);
            if !ann_ids.insert(a.id) {
                return Err(schema(rec, "duplicate id"));
            }
            if !(prediction && self.images.is_empty()) && !ids.contains(&a.image_id) {
                return Err(schema(rec, format!("references missing image {}", a.image_id)));
            }
            a.check(prediction).map_err(|r| schema(rec, r))?;
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.id == id)
    }

    /// Annotations grouped by image id.
    pub fn by_image(&self) -> BTreeMap<u64, Vec<&Annotation>> {
        let mut m: BTreeMap<u64, Vec<&Annotation>> = BTreeMap::new();
        for a in &self.annotations {
            m.entry(a.image_id).or_default().push(a);
        }
        m
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.annotations.iter().map(|a| a.category.as_str()).collect()
    }

    /// Canonical text: images and annotations sorted by id.
    pub fn to_canonical_string(&self) -> Result<String> {
        let mut c = self.clone();
        c.images.sort_by_key(|im| im.id);
        c.annotations.sort_by_key(|a| a.id);
        to_canonical_json(&c)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| schema("file", e.to_string()))
    }
}

fn schema(record: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema {
        record: record.into(),
        reason: reason.into(),
    }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits. Idempotent.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_significant).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with sorted object keys and floats rounded to 9 significant digits.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(super::read_bytes(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let text = read_text(path)?;
    let d = DatasetFile::from_json_str(&text)?;
    d.validate()?;
    Ok(d)
}

pub fn read_predictions(path: &Path) -> Result<DatasetFile> {
    let text = read_text(path)?;
    let d = DatasetFile::from_json_str(&text)?;
    d.validate_predictions()?;
    Ok(d)
}

/// Validates and writes the canonical form atomically.
pub fn write_dataset(path: &Path, d: &DatasetFile) -> Result<()> {
    d.validate()?;
    let text = d.to_canonical_string()?;
    super::atomic_write(path, |w| w.write_all(text.as_bytes()))
}

pub fn write_predictions(path: &Path, d: &DatasetFile) -> Result<()> {
    d.validate_predictions()?;
    let text = d.to_canonical_string()?;
    super::atomic_write(path, |w| w.write_all(text.as_bytes()))
}
