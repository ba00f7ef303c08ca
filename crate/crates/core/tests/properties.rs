use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use openbox3d::eval::{evaluate_sets, Detection, EvalConfig, GroundTruth, MatchMode};
use openbox3d::geometry::{geodesic_angle, r_y};
use openbox3d::io::{Annotation, DatasetFile, ImageRecord};
use openbox3d::{decode, encode, iou3d, normalize_rotation, Box2D, Box3D, CameraModel};

fn cam() -> CameraModel {
    CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
}

prop_compose! {
    fn rotation()(yaw in -PI..PI, axis in prop::array::uniform3(-1.0f64..1.0), tilt in 0.0f64..PI, tilted in any::<bool>())
        -> UnitQuaternion<f64> {
        let v = Vector3::from(axis);
        if tilted && v.norm() > 1e-3 {
            UnitQuaternion::from_scaled_axis(v.normalize() * tilt) * r_y(yaw)
        } else {
            r_y(yaw)
        }
    }
}

prop_compose! {
    fn box3d()(c in prop::array::uniform3(-3.0f64..3.0), z in 3.0f64..40.0,
               d in prop::array::uniform3(0.2f64..4.0), rot in rotation()) -> Box3D {
        Box3D::new(Vector3::new(c[0], c[1], c[2] + z), Vector3::from(d), rot).unwrap()
    }
}

fn corner_gap(a: &Box3D, b: &Box3D) -> f64 {
    let cb = b.corners();
    a.corners()
        .iter()
        .map(|p| cb.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn normalization_is_idempotent_and_keeps_corners(b in box3d()) {
        let (d1, r1) = normalize_rotation(&b.dims(), &b.rotation());
        let (d2, r2) = normalize_rotation(&d1, &r1);
        prop_assert!((d1 - d2).amax() < 1e-12);
        prop_assert!(geodesic_angle(&r1, &r2) < 1e-9);
        prop_assert!(d1.x <= d1.z);
        let n = Box3D::new(b.center(), d1, r1).unwrap();
        prop_assert!(corner_gap(&b, &n) < 1e-9);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in box3d(), b in box3d()) {
        let ab = iou3d(&a, &b);
        let ba = iou3d(&b, &a);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!((iou3d(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn codec_roundtrips(b in box3d()) {
        let b = b.normalized();
        if let Some(b2) = cam().project_box(&b, 0.05) {
            let d = decode(&encode(&b, &b2, &cam()).unwrap(), &b2, &cam()).unwrap();
            prop_assert!((d.center() - b.center()).norm() < 1e-9);
            prop_assert!((d.dims() - b.dims()).amax() < 1e-9);
            prop_assert!(geodesic_angle(&d.rotation(), &b.rotation()) < 1e-9);
        }
    }
}

fn scene(seed: &[(f64, f64, f64, f64, bool)]) -> (Vec<GroundTruth>, Vec<Detection>) {
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for (i, &(x, z, jitter, score, ignore)) in seed.iter().enumerate() {
        let image = (i % 3) as u64;
        let b = Box3D::axis_aligned(Vector3::new(x, 0.0, z), Vector3::new(1.0, 1.5, 2.0)).unwrap();
        let b2 = Box2D::new(10.0 * i as f64, 0.0, 10.0 * i as f64 + 40.0, 40.0).unwrap();
        gts.push(GroundTruth {
            id: i as u64,
            image_id: image,
            category: if i % 2 == 0 { "a".into() } else { "b".into() },
            box3d: (!ignore).then_some(b),
            box2d: b2,
            ignore3d: ignore,
        });
        let moved = b.with_center(b.center() + Vector3::new(jitter, 0.0, -jitter));
        let cat = if i % 2 == 0 { "a" } else { "b" };
        dets.push(Detection::new(100 + i as u64, image, cat, moved, b2, score, 0.5 * score));
    }
    (gts, dets)
}

fn rotate_all(gts: &mut [GroundTruth], dets: &mut [Detection], q: &UnitQuaternion<f64>) {
    let turn = |b: &Box3D| Box3D::new(q * b.center(), b.dims(), q * b.rotation()).unwrap();
    for g in gts {
        g.box3d = g.box3d.as_ref().map(turn);
    }
    for d in dets {
        d.box3d = turn(&d.box3d);
    }
}

fn scene_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64, bool)>> {
    prop::collection::vec((-20.0f64..20.0, 4.0f64..60.0, 0.0f64..2.0, 0.05f64..1.0, prop::bool::weighted(0.2)), 1..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dist_mode_ap_is_rotation_invariant(s in scene_strategy(), rot in rotation()) {
        let (mut gts, mut dets) = scene(&s);
        let cfg = EvalConfig::default();
        let before = evaluate_sets(&gts, &dets, &cfg).unwrap();
        rotate_all(&mut gts, &mut dets, &rot);
        let after = evaluate_sets(&gts, &dets, &cfg).unwrap();
        prop_assert!((before.ap - after.ap).abs() < 1e-12);
        for (k, v) in &before.per_category {
            prop_assert_eq!(&v.ap_per_threshold, &after.per_category[k].ap_per_threshold);
        }
    }

    #[test]
    fn evaluation_ignores_thread_count(s in scene_strategy(), iou_mode in any::<bool>()) {
        let (gts, dets) = scene(&s);
        let cfg = EvalConfig {
            mode: if iou_mode { MatchMode::Iou } else { MatchMode::Dist },
            ..EvalConfig::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| evaluate_sets(&gts, &dets, &cfg).unwrap());
        let b = four.install(|| evaluate_sets(&gts, &dets, &cfg).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ap_is_a_fraction(s in scene_strategy()) {
        let (gts, dets) = scene(&s);
        let r = evaluate_sets(&gts, &dets, &EvalConfig::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.ap));
        prop_assert!(r.ods <= 1.0);
    }

    #[test]
    fn canonical_json_is_idempotent(s in scene_strategy(), extra in 0.0f64..1e6) {
        let mut d = DatasetFile::default();
        for i in 0..3u64 {
            let mut im = ImageRecord::from_camera(i, &cam());
            im.intrinsics.fx += extra / 7.0;
            d.images.push(im);
        }
        for (i, &(x, z, jitter, _, ignore)) in s.iter().enumerate() {
            let b = Box3D::new(Vector3::new(x / 3.0, 0.1, z), Vector3::new(1.0 + jitter, 1.3, 2.1), r_y(jitter)).unwrap();
            let b2 = Box2D::new(0.1 * x.abs(), 1.0 / 3.0, 50.0 + jitter, 60.0).unwrap();
            let ann = if ignore {
                Annotation::ignored(i as u64, (i % 3) as u64, "a", &b2)
            } else {
                Annotation::with_box(i as u64, (i % 3) as u64, "a", &b2, &b)
            };
            d.annotations.push(ann);
        }
        let first = d.to_canonical_string().unwrap();
        let again = DatasetFile::from_json_str(&first).unwrap().to_canonical_string().unwrap();
        prop_assert_eq!(first, again);
    }
}
