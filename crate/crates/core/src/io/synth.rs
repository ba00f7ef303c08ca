//! Synthetic scenes: boxes resting on a ground plane, rendered to an exact
//! z-depth map with per-object visibility masks.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::rotation::r_y;
use crate::geometry::{iou3d, Box2D, Box3D};
use crate::io::{Annotation, DepthMap, ImageRecord, Quality};
use crate::lift::Mask2D;

/// Ground hits beyond this z-depth are left invalid.
pub const MAX_RENDER_DEPTH: f64 = 200.0;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Infinite plane `{p : normal . p = offset}` in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    /// z-depth at which the unit-z ray `dir` meets the plane, if in front of the camera.
    fn hit(&self, dir: &Vector3<f64>) -> Option<f64> {
        let den = self.normal.dot(dir);
        if den.abs() < 1e-12 {
            return None;
        }
        let t = self.offset / den;
        (t > 0.0).then_some(t)
    }
}

/// Rendered z-depth plus one visible-pixel mask per box. Background pixels have
/// no valid depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub depth: DepthMap,
    pub masks: Vec<Mask2D>,
}

/// Ray casts every pixel center and keeps the nearest hit. Depth is z-depth.
pub fn render(camera: &CameraModel, boxes: &[Box3D], ground: Option<&Plane>) -> Rendering {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let origin = Vector3::zeros();
    let rows: Vec<Vec<(f32, Option<usize>)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let ray = camera.homogeneous_ray(x as f64 + 0.5, y as f64 + 0.5);
                    let mut best: Option<(f64, Option<usize>)> = None;
                    for (i, b) in boxes.iter().enumerate() {
                        if let Some(t) = b.ray_hit(&origin, &ray) {
                            if best.is_none_or(|(bt, _)| t < bt) {
                                best = Some((t, Some(i)));
                            }
                        }
                    }
                    if let Some(t) = ground.and_then(|g| g.hit(&ray)) {
                        if t <= MAX_RENDER_DEPTH && best.is_none_or(|(bt, _)| t < bt) {
                            best = Some((t, None));
                        }
                    }
                    match best {
                        Some((t, id)) => (t as f32, id),
                        None => (0.0, None),
                    }
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(w * h);
    let mut masks = vec![Mask2D::empty(w, h); boxes.len()];
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (d, id)) in row.into_iter().enumerate() {
            data.push(d);
            if let Some(i) = id {
                masks[i].set(x, y, true);
            }
        }
    }
    Rendering {
        depth: DepthMap { width: w, height: h, data },
        masks,
    }
}

/// Adds zero-mean Gaussian noise to valid pixels, keeping them positive.
pub fn add_depth_noise(depth: &mut DepthMap, sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in depth.data.iter_mut().filter(|v| **v > 0.0) {
        let n = normal.sample(&mut rng) as f32;
        *v = (*v + n).max(1e-3);
    }
}

/// Parameters of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub box_count: usize,
    pub width_range: [f64; 2],
    pub height_range: [f64; 2],
    pub length_range: [f64; 2],
    pub depth_range: [f64; 2],
    pub camera: CameraModel,
    /// Height of the camera above the ground (m).
    pub camera_height: f64,
    /// Downward pitch of the camera (degrees).
    pub pitch_deg: f64,
    pub noise_sigma: f64,
    /// Upper bound on the intersection of two projected boxes over the smaller one's area.
    pub max_2d_overlap: f64,
    /// Pixels kept free between projected boxes and the image border.
    pub border_margin: f64,
    pub categories: Vec<String>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            box_count: 3,
            width_range: [0.5, 1.5],
            height_range: [0.5, 1.5],
            length_range: [0.8, 2.5],
            depth_range: [4.0, 12.0],
            camera: CameraModel {
                fx: 500.0,
                fy: 500.0,
                cx: 320.0,
                cy: 240.0,
                width: 640,
                height: 480,
            },
            camera_height: 1.6,
            pitch_deg: 0.0,
            noise_sigma: 0.0,
            max_2d_overlap: 0.3,
            border_margin: 4.0,
            categories: vec!["box".into(), "crate".into(), "cabinet".into()],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.width_range, self.height_range, self.length_range, self.depth_range];
        if ranges.iter().any(|r| !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite())) {
            return Err(Error::Format("size and depth ranges must be positive and ordered".into()));
        }
        if !(self.camera_height > 0.0 && self.noise_sigma >= 0.0 && self.pitch_deg.abs() < 60.0) {
            return Err(Error::Format("invalid camera height, pitch or noise".into()));
        }
        if self.categories.is_empty() {
            return Err(Error::Format("at least one category is required".into()));
        }
        CameraModel::new(
            self.camera.fx,
            self.camera.fy,
            self.camera.cx,
            self.camera.cy,
            self.camera.width,
            self.camera.height,
        )?;
        Ok(())
    }

    /// Rotation from the gravity-aligned world frame (y down) to the camera frame.
    pub fn world_to_camera(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.pitch_deg.to_radians())
    }

    pub fn ground_plane(&self) -> Plane {
        let n = self.world_to_camera() * Vector3::y();
        Plane {
            normal: n,
            offset: self.camera_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthObject {
    pub bbox: Box3D,
    /// Bounding box of the projected corners.
    pub box2d: Box2D,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub camera: CameraModel,
    pub objects: Vec<SynthObject>,
    pub depth: DepthMap,
    pub masks: Vec<Mask2D>,
    pub ground: Plane,
    /// Scene vertical in camera coordinates (pointing up, like `(0, -1, 0)`).
    pub vertical: Vector3<f64>,
}

/// Places `box_count` boxes on the ground by rejection sampling (pairwise 3D
/// IoU zero, projections inside the image and within the 2D overlap bound),
/// renders depth and masks, then adds depth noise.
pub fn synth_scene(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let cam = spec.camera;
    let q = spec.world_to_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut objects: Vec<SynthObject> = Vec::with_capacity(spec.box_count);
    let m = spec.border_margin;
    for index in 0..spec.box_count {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let dims = Vector3::new(
                rng.random_range(spec.width_range[0]..=spec.width_range[1]),
                rng.random_range(spec.height_range[0]..=spec.height_range[1]),
                rng.random_range(spec.length_range[0]..=spec.length_range[1]),
            );
            let yaw = rng.random_range(0.0..std::f64::consts::PI);
            let z = rng.random_range(spec.depth_range[0]..=spec.depth_range[1]);
            let u = rng.random_range(0.0..cam.width as f64);
            let x = (u - cam.cx) / cam.fx * z;
            let world_center = Vector3::new(x, spec.camera_height - 0.5 * dims.y, z);
            let category = spec.categories[rng.random_range(0..spec.categories.len())].clone();
            let Ok(b) = Box3D::new(q * world_center, dims, q * r_y(yaw)) else {
                continue;
            };
            let Some(b2) = cam.project_box(&b, 0.1) else {
                continue;
            };
            let inside = b2.x1 >= m && b2.y1 >= m && b2.x2 <= cam.width as f64 - m && b2.y2 <= cam.height as f64 - m;
            if !inside {
                continue;
            }
            let clear = objects
                .iter()
                .all(|o| iou3d(&o.bbox, &b) == 0.0 && overlap_of_smaller(&o.box2d, &b2) <= spec.max_2d_overlap);
            if clear {
                placed = Some(SynthObject {
                    bbox: b,
                    box2d: b2,
                    category,
                });
                break;
            }
        }
        objects.push(placed.ok_or(Error::PlacementFailed(index))?);
    }
    let ground = spec.ground_plane();
    let boxes: Vec<Box3D> = objects.iter().map(|o| o.bbox).collect();
    let mut r = render(&cam, &boxes, Some(&ground));
    add_depth_noise(&mut r.depth, spec.noise_sigma, spec.seed ^ 0xD1CE);
    Ok(SynthScene {
        camera: cam,
        objects,
        depth: r.depth,
        masks: r.masks,
        ground,
        vertical: -ground.normal,
    })
}

fn overlap_of_smaller(a: &Box2D, b: &Box2D) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    iw * ih / a.area().min(b.area())
}

impl SynthScene {
    /// Image record and exact ground-truth annotations, numbered from
    /// `first_annotation_id`.
    pub fn to_records(&self, image_id: u64, first_annotation_id: u64) -> (ImageRecord, Vec<Annotation>) {
        let image = ImageRecord::from_camera(image_id, &self.camera);
        let anns = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let mut a = Annotation::with_box(first_annotation_id + i as u64, image_id, &o.category, &o.box2d, &o.bbox);
                a.quality = Some(Quality::GoodFit);
                a
            })
            .collect();
        (image, anns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::SceneCloud;

    fn cam() -> CameraModel {
        CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn unit_cube_silhouette() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 4.0), Vector3::repeat(1.0)).unwrap();
        let r = render(&cam(), &[b], None);
        let [x1, y1, x2, y2] = r.masks[0].bounds().unwrap();
        // the nearest face sits at z = 3.5
        let half = 500.0 * 0.5 / 3.5;
        assert!(((x2 - x1) / 2.0 - half).abs() <= 1.0);
        assert!(((y2 - y1) / 2.0 - half).abs() <= 1.0);
        assert_eq!(r.depth.get(320, 240), 3.5);
        assert_eq!(r.depth.get(0, 0), 0.0);
    }

    #[test]
    fn noiseless_backprojection_lies_on_surfaces() {
        let spec = SynthSpec {
            seed: 4,
            ..SynthSpec::default()
        };
        let s = synth_scene(&spec).unwrap();
        let cloud = SceneCloud::from_depth(&s.depth, &s.camera).unwrap();
        for (p, &(x, y)) in cloud.points.iter().zip(&cloud.pixels) {
            let owner = s.masks.iter().position(|m| m.get(x as usize, y as usize));
            let d = match owner {
                Some(i) => s.objects[i].bbox.outside_distance(p),
                None => (s.ground.normal.dot(p) - s.ground.offset).abs(),
            };
            assert!(d < 1e-4, "pixel ({x}, {y}) is {d} m off its surface");
        }
        for (i, a) in s.objects.iter().enumerate() {
            for b in &s.objects[i + 1..] {
                assert_eq!(iou3d(&a.bbox, &b.bbox), 0.0);
            }
        }
    }

    #[test]
    fn deterministic_and_noisy() {
        let spec = SynthSpec {
            seed: 9,
            noise_sigma: 0.01,
            ..SynthSpec::default()
        };
        let a = synth_scene(&spec).unwrap();
        let b = synth_scene(&spec).unwrap();
        assert_eq!(a.depth, b.depth);
        let clean = synth_scene(&SynthSpec { noise_sigma: 0.0, ..spec }).unwrap();
        assert_ne!(a.depth, clean.depth);
        assert_eq!(a.masks, clean.masks);
    }

    #[test]
    fn impossible_placement_fails() {
        let spec = SynthSpec {
            box_count: 2,
            width_range: [30.0, 30.0],
            length_range: [30.0, 30.0],
            ..SynthSpec::default()
        };
        assert!(matches!(synth_scene(&spec), Err(Error::PlacementFailed(0))));
    }
}
