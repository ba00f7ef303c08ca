//! Rule-based candidate filters. Every rule is a pure function of its inputs;
//! failing candidates are flagged ignore3d by the caller.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::geometry::{convex_hull_2d, polygon_area, Box2D, Box3D};
use crate::lift::{Generator, LiftCandidate};

pub const EDGE_CONTACT_MAX: f64 = 0.03;
pub const EDGE_BAND_PX: f64 = 2.0;
pub const OCCLUSION_MAX: f64 = 0.15;
pub const PROJECTION_RATIO_RANGE: [f64; 2] = [0.5, 1.5];
pub const AXIS_PROPORTION_MIN: f64 = 0.05;
pub const SMALL_OBJECT_AREA_FRACTION: f64 = 0.005;
pub const UPGRADE_MIN_IOU: f64 = 0.5;

pub const RULE_EDGE_CONTACT: &str = "edge_contact";
pub const RULE_OCCLUSION: &str = "occlusion";
pub const RULE_PROJECTION: &str = "proj_size_ratio";
pub const RULE_SIZE_SHORTEST: &str = "size_shortest";
pub const RULE_SIZE_MIDDLE: &str = "size_middle";
pub const RULE_SIZE_LONGEST: &str = "size_longest";
pub const RULE_DEPTH_WIDTH: &str = "depth_width_ratio";
pub const RULE_AXIS_PROPORTION: &str = "axis_proportion";
pub const FLAG_NO_SPEC: &str = "no_spec";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub failed_rules: Vec<String>,
    pub measurements: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FilterVerdict {
    fn new() -> Self {
        Self {
            passed: true,
            ..Self::default()
        }
    }

    fn measure(&mut self, name: &str, value: f64) {
        self.measurements.insert(name.to_string(), value);
    }

    fn fail(&mut self, rule: &str) {
        self.passed = false;
        self.failed_rules.push(rule.to_string());
    }

    /// Union of two verdicts; failed rules are kept sorted so the result does
    /// not depend on evaluation order.
    pub fn merge(mut self, other: FilterVerdict) -> Self {
        self.failed_rules.extend(other.failed_rules);
        self.failed_rules.sort();
        self.failed_rules.dedup();
        self.measurements.extend(other.measurements);
        self.flags.extend(other.flags);
        self.flags.sort();
        self.flags.dedup();
        self.passed = self.failed_rules.is_empty();
        self
    }
}

/// Fraction of the 2D box perimeter made of sides lying within `band` pixels
/// of the image border they are parallel to.
pub fn edge_contact_ratio(b: &Box2D, width: f64, height: f64, band: f64) -> f64 {
    let (w, h) = (b.width(), b.height());
    let mut touching = 0.0;
    if b.x1 <= band {
        touching += h;
    }
    if b.x2 >= width - band {
        touching += h;
    }
    if b.y1 <= band {
        touching += w;
    }
    if b.y2 >= height - band {
        touching += w;
    }
    touching / (2.0 * (w + h))
}

/// `sqrt(area of the projected corners' hull / area of box2d)`; infinite when
/// a corner is behind the camera.
pub fn projection_size_ratio(b: &Box3D, box2d: &Box2D, camera: &CameraModel) -> f64 {
    match camera.project_corners(b, 1e-6) {
        Some(c) => (polygon_area(&convex_hull_2d(&c)) / box2d.area()).sqrt(),
        None => f64::INFINITY,
    }
}

/// Edge contact, occlusion (RANSAC-PCA candidates only) and projection size.
/// The image size is the camera's.
pub fn geometric_filter(c: &LiftCandidate, box2d: &Box2D, camera: &CameraModel) -> FilterVerdict {
    let mut v = FilterVerdict::new();
    let edge = edge_contact_ratio(box2d, camera.width as f64, camera.height as f64, EDGE_BAND_PX);
    v.measure(RULE_EDGE_CONTACT, edge);
    if edge >= EDGE_CONTACT_MAX {
        v.fail(RULE_EDGE_CONTACT);
    }
    if c.generator == Generator::RansacPca {
        let occ = c.occlusion_ratio.unwrap_or(0.0);
        v.measure(RULE_OCCLUSION, occ);
        if occ > OCCLUSION_MAX {
            v.fail(RULE_OCCLUSION);
        }
    }
    let ratio = projection_size_ratio(&c.bbox, box2d, camera);
    v.measure(RULE_PROJECTION, ratio);
    if !(PROJECTION_RATIO_RANGE[0]..=PROJECTION_RATIO_RANGE[1]).contains(&ratio) {
        v.fail(RULE_PROJECTION);
    }
    v
}

/// Per-category plausible size ranges (meters) and shape flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSpec {
    pub category: String,
    pub shortest_min: f64,
    pub shortest_max: f64,
    pub middle_min: f64,
    pub middle_max: f64,
    pub longest_min: f64,
    pub longest_max: f64,
    pub max_depth_width_ratio: f64,
    pub is_flat: bool,
    pub is_elongated: bool,
    pub fixed_size: bool,
}

impl SizeSpec {
    pub fn validate(&self) -> Result<(), String> {
        let pairs = [
            (self.shortest_min, self.shortest_max),
            (self.middle_min, self.middle_max),
            (self.longest_min, self.longest_max),
        ];
        if pairs.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo <= hi)) {
            return Err("axis ranges need 0 <= min <= max".into());
        }
        if !(self.max_depth_width_ratio.is_finite() && self.max_depth_width_ratio > 0.0) {
            return Err("max_depth_width_ratio must be positive".into());
        }
        Ok(())
    }

    fn ranges(&self) -> [(f64, f64); 3] {
        [
            (self.shortest_min, self.shortest_max),
            (self.middle_min, self.middle_max),
            (self.longest_min, self.longest_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetClass {
    Standard,
    FineGrained,
}

/// Size tolerance: `[min / tau, max * tau]` is accepted.
pub fn size_tolerance(fixed_size: bool, class: DatasetClass) -> f64 {
    match (class, fixed_size) {
        (DatasetClass::Standard, true) => 1.5,
        (DatasetClass::Standard, false) => 3.0,
        (DatasetClass::FineGrained, true) => 2.5,
        (DatasetClass::FineGrained, false) => 5.0,
    }
}

fn sorted_dims(b: &Box3D) -> [f64; 3] {
    let mut d = [b.dims().x, b.dims().y, b.dims().z];
    d.sort_by(f64::total_cmp);
    d
}

/// Sorted box dimensions against the category's axis ranges. Flat categories
/// skip the shortest axis, elongated ones the shortest and longest. A missing
/// spec passes with the `no_spec` flag.
pub fn size_filter(b: &Box3D, spec: Option<&SizeSpec>, class: DatasetClass) -> FilterVerdict {
    let mut v = FilterVerdict::new();
    let Some(spec) = spec else {
        v.flags.push(FLAG_NO_SPEC.to_string());
        return v;
    };
    let tau = size_tolerance(spec.fixed_size, class);
    v.measure("size_tolerance", tau);
    let dims = sorted_dims(b);
    let rules = [RULE_SIZE_SHORTEST, RULE_SIZE_MIDDLE, RULE_SIZE_LONGEST];
    for (k, ((lo, hi), rule)) in spec.ranges().into_iter().zip(rules).enumerate() {
        let skip = (k == 0 && (spec.is_flat || spec.is_elongated)) || (k == 2 && spec.is_elongated);
        if skip {
            continue;
        }
        v.measure(rule, dims[k]);
        if dims[k] < lo / tau || dims[k] > hi * tau {
            v.fail(rule);
        }
    }
    v
}

/// Depth-to-width ratio (local z extent over local x extent, non-strict upper
/// bound) and, for regular shapes, the shortest-to-middle axis proportion.
pub fn ratio_filters(b: &Box3D, spec: Option<&SizeSpec>) -> FilterVerdict {
    let mut v = FilterVerdict::new();
    let Some(spec) = spec else {
        v.flags.push(FLAG_NO_SPEC.to_string());
        return v;
    };
    let ratio = b.dims().z / b.dims().x;
    v.measure(RULE_DEPTH_WIDTH, ratio);
    if ratio > spec.max_depth_width_ratio {
        v.fail(RULE_DEPTH_WIDTH);
    }
    if !spec.is_flat && !spec.is_elongated {
        let d = sorted_dims(b);
        let p = d[0] / d[1];
        v.measure(RULE_AXIS_PROPORTION, p);
        if p < AXIS_PROPORTION_MIN {
            v.fail(RULE_AXIS_PROPORTION);
        }
    }
    v
}

/// True when the 2D box covers less than 0.5% of the image.
pub fn small_object_gate(box2d: &Box2D, width: f64, height: f64) -> bool {
    box2d.area() < SMALL_OBJECT_AREA_FRACTION * width * height
}

/// Externally scored inputs of the small-object upgrade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpgradeInputs {
    pub score: u32,
    pub category_ok: bool,
    pub generator: Generator,
}

/// Whether a small object may keep its 3D box: score at least 10 with a
/// matching category from a reconstruction or geometric generator; score 10
/// additionally needs a projected IoU of at least 0.5 (score 11 is exempt).
pub fn small_object_upgrade(projected_iou: f64, inputs: &UpgradeInputs) -> bool {
    let generator_ok = matches!(
        inputs.generator,
        Generator::LabelAny3D | Generator::Sam3D | Generator::RansacPca
    );
    if !(generator_ok && inputs.category_ok) {
        return false;
    }
    match inputs.score {
        s if s >= 11 => true,
        10 => projected_iou >= UPGRADE_MIN_IOU,
        _ => false,
    }
}

/// All candidate rules combined. Without a spec only the geometric rules apply
/// and the verdict carries the `no_spec` flag.
pub fn filter_candidate(
    c: &LiftCandidate,
    box2d: &Box2D,
    camera: &CameraModel,
    spec: Option<&SizeSpec>,
    class: DatasetClass,
) -> FilterVerdict {
    geometric_filter(c, box2d, camera)
        .merge(size_filter(&c.bbox, spec, class))
        .merge(ratio_filters(&c.bbox, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn car() -> SizeSpec {
        SizeSpec {
            category: "car".into(),
            shortest_min: 1.2,
            shortest_max: 1.8,
            middle_min: 1.5,
            middle_max: 2.2,
            longest_min: 3.5,
            longest_max: 5.5,
            max_depth_width_ratio: 4.0,
            is_flat: false,
            is_elongated: false,
            fixed_size: true,
        }
    }

    fn cam() -> CameraModel {
        CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn edge_contact_left_edge() {
        let b = Box2D::new(0.0, 100.0, 50.0, 200.0).unwrap();
        let r = edge_contact_ratio(&b, 640.0, 480.0, 2.0);
        assert!((r - 100.0 / 300.0).abs() < 1e-12);
        let inner = Box2D::new(10.0, 10.0, 60.0, 60.0).unwrap();
        assert_eq!(edge_contact_ratio(&inner, 640.0, 480.0, 2.0), 0.0);
    }

    #[test]
    fn geometric_rules() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 5.0), Vector3::repeat(1.0)).unwrap();
        let camera = cam();
        let hull = camera.project_corners(&b, 0.1).unwrap();
        let tight = Box2D::enclosing(hull.iter()).unwrap();
        let mut c = LiftCandidate::raw(b, Generator::RansacPca);
        c.occlusion_ratio = Some(0.0);
        // the hull of a head-on cube is its bounding box
        let v = geometric_filter(&c, &tight, &camera);
        assert!(v.passed, "{v:?}");
        assert!((v.measurements[RULE_PROJECTION] - 1.0).abs() < 1e-9);

        let [cx, cy] = tight.center();
        let small = Box2D::from_center_size(cx, cy, tight.width() / 1.6, tight.height() / 1.6).unwrap();
        let v = geometric_filter(&c, &small, &camera);
        assert_eq!(v.failed_rules, vec![RULE_PROJECTION]);

        c.occlusion_ratio = Some(0.2);
        assert!(geometric_filter(&c, &tight, &camera).failed_rules.contains(&RULE_OCCLUSION.to_string()));
        c.generator = Generator::Sam3D;
        assert!(geometric_filter(&c, &tight, &camera).passed);
    }

    #[test]
    fn car_length_tolerances() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 20.0), Vector3::new(1.8, 1.5, 9.0)).unwrap();
        let v = size_filter(&b, Some(&car()), DatasetClass::Standard);
        assert_eq!(v.failed_rules, vec![RULE_SIZE_LONGEST]);
        assert!(size_filter(&b, Some(&car()), DatasetClass::FineGrained).passed);
        let v = size_filter(&b, None, DatasetClass::Standard);
        assert!(v.passed && v.flags == vec![FLAG_NO_SPEC]);
    }

    #[test]
    fn flat_and_ratio_rules() {
        let poster = SizeSpec {
            category: "poster".into(),
            shortest_min: 0.01,
            shortest_max: 0.05,
            middle_min: 0.4,
            middle_max: 1.0,
            longest_min: 0.5,
            longest_max: 1.5,
            max_depth_width_ratio: 1.0,
            is_flat: true,
            is_elongated: false,
            fixed_size: false,
        };
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 3.0), Vector3::new(1.0, 0.7, 0.0001)).unwrap();
        assert!(size_filter(&b, Some(&poster), DatasetClass::Standard).passed);
        let r = ratio_filters(&b, Some(&poster));
        assert!(r.passed && !r.measurements.contains_key(RULE_AXIS_PROPORTION));

        let spec = car();
        let at = Box3D::axis_aligned(Vector3::zeros(), Vector3::new(1.0, 1.0, 4.0)).unwrap();
        assert!(ratio_filters(&at, Some(&spec)).passed);
        let over = Box3D::axis_aligned(Vector3::zeros(), Vector3::new(1.0, 1.0, 8.0)).unwrap();
        assert_eq!(ratio_filters(&over, Some(&spec)).failed_rules, vec![RULE_DEPTH_WIDTH]);
    }

    #[test]
    fn small_objects() {
        let b = Box2D::new(0.0, 0.0, 50.0, 50.0).unwrap();
        assert!(small_object_gate(&b, 1000.0, 1000.0));
        let b = Box2D::new(0.0, 0.0, 80.0, 80.0).unwrap();
        assert!(!small_object_gate(&b, 1000.0, 1000.0));
        let inputs = UpgradeInputs {
            score: 10,
            category_ok: true,
            generator: Generator::RansacPca,
        };
        assert!(!small_object_upgrade(0.45, &inputs));
        assert!(small_object_upgrade(0.5, &inputs));
        assert!(small_object_upgrade(0.1, &UpgradeInputs { score: 11, ..inputs }));
        assert!(!small_object_upgrade(0.9, &UpgradeInputs { score: 9, ..inputs }));
        assert!(!small_object_upgrade(0.9, &UpgradeInputs { generator: Generator::DetAny3D, ..inputs }));
    }
}
