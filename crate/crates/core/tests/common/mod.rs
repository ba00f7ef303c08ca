#![allow(dead_code)]

use nalgebra::Vector3;
use openbox3d::losses::{
    camera_ray_mse, conf_loss, conf_loss_with_targets, depth_l1, global_pointmap_alignment, l3d_regression, loss_2d,
    mask_bce, silog, Loss2dConfig, MaskState, Presence, ScoredBox2D,
};
use openbox3d::{BoxEncoding12, Box2D, CameraModel, LossReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;
pub const POINTS: usize = 100;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: &'static str,
    pub points: usize,
    pub entries: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.points == POINTS
    }
}

fn central_diff(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = buf[k];
            buf[k] = orig + FD_STEP;
            let up = f(&buf);
            buf[k] = orig - FD_STEP;
            let down = f(&buf);
            buf[k] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn compare(check: &mut GradCheck, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len(), "{}: gradient length", check.name);
    check.points += 1;
    for (a, n) in analytic.iter().zip(numeric) {
        let err = (a - n).abs();
        let scale = a.abs().max(n.abs());
        check.entries += 1;
        if err > REL_TOL * scale + ABS_FLOOR {
            check.failures += 1;
        }
        if scale > 0.0 {
            check.worst_rel = check.worst_rel.max(err / scale.max(ABS_FLOOR / REL_TOL));
        }
    }
}

fn run(name: &'static str, seed: u64, mut point: impl FnMut(&mut ChaCha8Rng, &mut GradCheck)) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = GradCheck {
        name,
        points: 0,
        entries: 0,
        failures: 0,
        worst_rel: 0.0,
    };
    for _ in 0..POINTS {
        point(&mut rng, &mut check);
    }
    check
}

/// Value away from zero so that |x| stays clear of an L1 kink.
fn off_zero(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let m = rng.random_range(0.01..1.0) * scale;
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

pub fn check_l3d(seed: u64) -> GradCheck {
    run("l3d_regression", seed, |rng, check| {
        let n = rng.random_range(1..5);
        let targets: Vec<BoxEncoding12> = (0..n)
            .map(|_| BoxEncoding12(std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
            .collect();
        let weights: Vec<[f64; 12]> = (0..n)
            .map(|_| std::array::from_fn(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..2.0) }))
            .collect();
        let x: Vec<f64> = targets.iter().flat_map(|t| t.0.map(|v| v + off_zero(rng, 0.5))).collect();
        let pack = |x: &[f64]| -> Vec<BoxEncoding12> {
            x.chunks(12).map(|c| BoxEncoding12(c.try_into().unwrap())).collect()
        };
        let f = |x: &[f64]| l3d_regression(&pack(x), &targets, &weights).unwrap().value;
        let r = l3d_regression(&pack(&x), &targets, &weights).unwrap();
        compare(check, &r.gradient, &central_diff(&x, &f));
    })
}

pub fn check_conf(seed: u64) -> GradCheck {
    run("conf_loss", seed, |rng, check| {
        let nm = rng.random_range(1..5);
        let nu = rng.random_range(1..6);
        let matched: Vec<f64> = (0..nm).map(|_| rng.random_range(-4.0..4.0)).collect();
        let q: Vec<f64> = (0..nm).map(|_| rng.random_range(0.05..1.0)).collect();
        let unmatched: Vec<f64> = (0..nu).map(|_| rng.random_range(-4.0..4.0)).collect();
        let r = conf_loss(&matched, &q, &unmatched).unwrap();
        // the soft targets are held fixed at the evaluation point
        let targets: Vec<f64> = matched
            .iter()
            .zip(&q)
            .map(|(&c, &qq)| openbox3d::losses::soft_target(c, qq))
            .collect();
        let x: Vec<f64> = matched.iter().chain(&unmatched).copied().collect();
        let f = |x: &[f64]| conf_loss_with_targets(&x[..nm], &targets, &x[nm..]).value;
        compare(check, &r.gradient, &central_diff(&x, &f));
    })
}

fn depth_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = rng.random_range(4..40);
    let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..60.0)).collect();
    let pred: Vec<f64> = gt
        .iter()
        .map(|g| {
            let r: f64 = rng.random_range(0.55..1.8);
            let r = if (r - 1.0).abs() < 0.01 { 1.05 } else { r };
            g * r
        })
        .collect();
    let mut valid: Vec<bool> = (0..n).map(|_| rng.random_bool(0.85)).collect();
    valid[0] = true;
    (pred, gt, valid)
}

pub fn check_silog(seed: u64) -> GradCheck {
    run("silog", seed, |rng, check| {
        let (pred, gt, valid) = depth_pair(rng);
        let f = |x: &[f64]| silog(x, &gt, &valid).unwrap().value;
        let r = silog(&pred, &gt, &valid).unwrap();
        compare(check, &r.gradient, &central_diff(&pred, &f));
    })
}

pub fn check_depth_l1(seed: u64) -> GradCheck {
    run("depth_l1", seed, |rng, check| {
        let (pred, gt, valid) = depth_pair(rng);
        let f = |x: &[f64]| depth_l1(x, &gt, &valid).unwrap().value;
        let r = depth_l1(&pred, &gt, &valid).unwrap();
        compare(check, &r.gradient, &central_diff(&pred, &f));
    })
}

pub fn check_mask_bce(seed: u64) -> GradCheck {
    run("mask_bce", seed, |rng, check| {
        let n = rng.random_range(2..50);
        let states: Vec<MaskState> = (0..n)
            .map(|i| match (i, rng.random_range(0..3)) {
                (0, _) | (_, 0) => MaskState::Finite,
                (_, 1) => MaskState::Invalid,
                _ => MaskState::Unknown,
            })
            .collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let f = |x: &[f64]| mask_bce(x, &states).unwrap().value;
        let r = mask_bce(&p, &states).unwrap();
        compare(check, &r.gradient, &central_diff(&p, &f));
    })
}

pub fn check_alignment(seed: u64) -> GradCheck {
    run("global_pointmap_alignment", seed, |rng, check| {
        let n = rng.random_range(6..30);
        let gt: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(1.0..20.0)))
            .collect();
        let a = rng.random_range(0.5..2.0);
        let shift = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let x: Vec<f64> = gt
            .iter()
            .flat_map(|g| {
                let noise = Vector3::new(off_zero(rng, 0.3), off_zero(rng, 0.3), off_zero(rng, 0.3));
                let p = a * g + shift + noise;
                [p.x, p.y, p.z]
            })
            .collect();
        let mut valid: Vec<bool> = (0..n).map(|_| rng.random_bool(0.9)).collect();
        valid[..5].fill(true);
        let pack = |x: &[f64]| -> Vec<Vector3<f64>> { x.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect() };
        let f = |x: &[f64]| global_pointmap_alignment(&pack(x), &gt, &valid).unwrap().value;
        let r = global_pointmap_alignment(&pack(&x), &gt, &valid).unwrap();
        compare(check, &r.gradient, &central_diff(&x, &f));
    })
}

pub fn check_camera_ray(seed: u64) -> GradCheck {
    run("camera_ray_mse", seed, |rng, check| {
        let (w, h) = (640u32, 480u32);
        let gt = CameraModel::new(
            rng.random_range(300.0..900.0),
            rng.random_range(300.0..900.0),
            rng.random_range(280.0..360.0),
            rng.random_range(200.0..280.0),
            w,
            h,
        )
        .unwrap();
        let x = [
            gt.fx * rng.random_range(0.7..1.4),
            gt.fy * rng.random_range(0.7..1.4),
            gt.cx + rng.random_range(-40.0..40.0),
            gt.cy + rng.random_range(-40.0..40.0),
        ];
        let cam = |x: &[f64]| CameraModel::new(x[0], x[1], x[2], x[3], w, h).unwrap();
        let f = |x: &[f64]| camera_ray_mse(&cam(x), &gt, 16, 12).value;
        let r = camera_ray_mse(&cam(&x), &gt, 16, 12);
        compare(check, &r.gradient, &central_diff(&x, &f));
    })
}

fn random_box(rng: &mut ChaCha8Rng) -> Box2D {
    let x1 = rng.random_range(0.0..500.0);
    let y1 = rng.random_range(0.0..400.0);
    Box2D::new(x1, y1, x1 + rng.random_range(10.0..150.0), y1 + rng.random_range(10.0..150.0)).unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, b: &Box2D) -> Box2D {
    let d: [f64; 4] = std::array::from_fn(|_| off_zero(rng, 8.0));
    Box2D::new(b.x1 + d[0], b.y1 + d[1], (b.x2 + d[2]).max(b.x1 + d[0] + 2.0), (b.y2 + d[3]).max(b.y1 + d[1] + 2.0))
        .unwrap()
}

pub fn check_loss_2d(seed: u64) -> GradCheck {
    let cfg = Loss2dConfig {
        image_width: 640.0,
        image_height: 480.0,
    };
    run("loss_2d", seed, |rng, check| {
        let nt = rng.random_range(1..3);
        let np = nt + rng.random_range(0..3);
        let targets: Vec<Box2D> = (0..nt).map(|_| random_box(rng)).collect();
        let preds: Vec<ScoredBox2D> = (0..np)
            .map(|i| ScoredBox2D {
                bbox: if i < nt { jitter(rng, &targets[i]) } else { random_box(rng) },
                logit: rng.random_range(-4.0..4.0),
            })
            .collect();
        let matches: Vec<(usize, usize)> = (0..nt).map(|i| (i, i)).collect();
        let presence: Vec<Presence> = (0..rng.random_range(1..4))
            .map(|_| Presence {
                logit: rng.random_range(-4.0..4.0),
                present: rng.random_bool(0.5),
            })
            .collect();
        let r = loss_2d(&preds, &targets, &matches, &presence, &cfg).unwrap();
        // the classification soft targets are held fixed at the evaluation point
        let soft: Vec<f64> = matches
            .iter()
            .map(|&(p, t)| openbox3d::losses::soft_target(preds[p].logit, preds[p].bbox.iou(&targets[t])))
            .collect();
        let x: Vec<f64> = preds
            .iter()
            .flat_map(|p| [p.bbox.x1, p.bbox.y1, p.bbox.x2, p.bbox.y2, p.logit])
            .chain(presence.iter().map(|p| p.logit))
            .collect();
        let f = |x: &[f64]| {
            let ps: Vec<ScoredBox2D> = x[..5 * np]
                .chunks(5)
                .map(|c| ScoredBox2D {
                    bbox: Box2D::new(c[0], c[1], c[2], c[3]).unwrap(),
                    logit: c[4],
                })
                .collect();
            let pr: Vec<Presence> = presence
                .iter()
                .zip(&x[5 * np..])
                .map(|(p, &l)| Presence { logit: l, present: p.present })
                .collect();
            let rep: LossReport = loss_2d(&ps, &targets, &matches, &pr, &cfg).unwrap();
            let cls = rep.term("cls").unwrap();
            let pos: Vec<f64> = matches.iter().map(|&(p, _)| ps[p].logit).collect();
            let neg: Vec<f64> = (nt..np).map(|i| ps[i].logit).collect();
            let fixed = conf_loss_with_targets(&pos, &soft, &neg).value;
            rep.value - cls.weight * cls.value + cls.weight * fixed
        };
        compare(check, &r.gradient, &central_diff(&x, &f));
    })
}

pub fn gradient_suite(seed: u64) -> Vec<GradCheck> {
    vec![
        check_l3d(seed),
        check_conf(seed + 1),
        check_silog(seed + 2),
        check_depth_l1(seed + 3),
        check_mask_bce(seed + 4),
        check_alignment(seed + 5),
        check_camera_ray(seed + 6),
        check_loss_2d(seed + 7),
    ]
}

/// SILog of `pred = 2 gt`: the log residual is constant `ln 2`.
pub fn silog_doubled_depth() -> f64 {
    let gt: Vec<f64> = (1..=50).map(|i| 0.7 * i as f64).collect();
    let pred: Vec<f64> = gt.iter().map(|g| 2.0 * g).collect();
    silog(&pred, &gt, &vec![true; gt.len()]).unwrap().value
}

pub fn silog_doubled_expected() -> f64 {
    0.15f64.sqrt() * std::f64::consts::LN_2
}
