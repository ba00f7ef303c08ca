use nalgebra::{Matrix3, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{Box2D, Box3D};

/// Settings of the two-stage translation search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub grid_size: usize,
    /// Search window per local axis, as a multiple of the box dimension.
    pub window_scale: f64,
    pub lambda_inclusion: f64,
    pub lambda_tightness: f64,
    pub lambda_2d: f64,
    pub inclusion_buffer: f64,
    pub tightness_buffer: f64,
    pub max_iterations: usize,
    pub ftol: f64,
    /// Central-difference step (m) of the numeric gradient.
    pub gradient_step: f64,
    pub anchor_count: usize,
    pub mahalanobis_alpha: f64,
    pub iou_switch: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_size: 5,
            window_scale: 1.0,
            lambda_inclusion: 1.0,
            lambda_tightness: 0.5,
            lambda_2d: 0.5,
            inclusion_buffer: 0.02,
            tightness_buffer: 0.1,
            max_iterations: 100,
            ftol: 1e-6,
            gradient_step: 1e-4,
            anchor_count: 256,
            mahalanobis_alpha: 0.5,
            iou_switch: 0.4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.window_scale,
            self.lambda_inclusion,
            self.lambda_tightness,
            self.lambda_2d,
            self.inclusion_buffer,
            self.tightness_buffer,
            self.ftol,
            self.gradient_step,
            self.mahalanobis_alpha,
            self.iou_switch,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Format("optimizer constants must be positive".into()));
        }
        if self.grid_size == 0 || self.grid_size.is_multiple_of(2) {
            return Err(Error::Format(format!("grid size must be odd, got {}", self.grid_size)));
        }
        if self.max_iterations == 0 || self.anchor_count == 0 {
            return Err(Error::Format("iteration and anchor counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub point: Vector3<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorWeights {
    pub weights: Vec<f64>,
    /// Covariance could not be inverted; weights are uniform.
    pub singular: bool,
}

/// `w_i = exp(-alpha * m_i)` with `m_i` the Mahalanobis distance of point `i`
/// to the sample mean under the sample covariance plus `1e-6 I`.
pub fn anchor_weights(points: &[Vector3<f64>], alpha: f64) -> AnchorWeights {
    let n = points.len();
    if n == 0 {
        return AnchorWeights {
            weights: Vec::new(),
            singular: true,
        };
    }
    let mean = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    cov += Matrix3::identity() * 1e-6;
    match cov.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())) {
        Some(inv) => AnchorWeights {
            weights: points
                .iter()
                .map(|p| {
                    let d = p - mean;
                    let m = (d.transpose() * inv * d)[(0, 0)].max(0.0).sqrt();
                    (-alpha * m).exp()
                })
                .collect(),
            singular: false,
        },
        None => AnchorWeights {
            weights: vec![1.0; n],
            singular: true,
        },
    }
}

/// Draws `count` anchors with replacement, with probability proportional to weight.
pub fn sample_anchors(points: &[Vector3<f64>], weights: &[f64], count: usize, seed: u64) -> Result<Vec<Anchor>> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} points with {} weights",
            points.len(),
            weights.len()
        )));
    }
    let dist = WeightedIndex::new(weights).or_else(|_| WeightedIndex::new(vec![1.0; weights.len()]))
        .map_err(|e| Error::DegeneratePoints(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let i = dist.sample(&mut rng);
            Anchor {
                point: points[i],
                weight: weights[i],
            }
        })
        .collect())
}

/// Weighted objective breakdown at one box position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationLosses {
    pub inclusion: f64,
    pub tightness: f64,
    pub projection_2d: f64,
    pub total: f64,
}

/// Weighted mean over anchors of `max(0, outside distance - buffer)`.
pub fn inclusion_loss(b: &Box3D, anchors: &[Anchor], buffer: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for a in anchors {
        num += a.weight * (b.outside_distance(&a.point) - buffer).max(0.0);
        den += a.weight;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Mean over the six faces of `max(0, d_f - buffer)`, with `d_f` the distance
/// from the face plane to the nearest anchor.
pub fn tightness_loss(b: &Box3D, anchors: &[Anchor], buffer: f64) -> f64 {
    if anchors.is_empty() {
        return 0.0;
    }
    let half = b.dims() * 0.5;
    let mut nearest = [f64::INFINITY; 6];
    for a in anchors {
        let q = b.to_local(&a.point);
        for axis in 0..3 {
            nearest[2 * axis] = nearest[2 * axis].min((q[axis] - half[axis]).abs());
            nearest[2 * axis + 1] = nearest[2 * axis + 1].min((q[axis] + half[axis]).abs());
        }
    }
    nearest.iter().map(|d| (d - buffer).max(0.0)).sum::<f64>() / 6.0
}

/// `1 - GIoU` of the projected box against the annotation, or 2 when the box
/// reaches behind the camera.
pub fn projection_loss(b: &Box3D, box2d: &Box2D, camera: &CameraModel) -> f64 {
    match camera.project_box(b, 1e-3) {
        Some(p) => 1.0 - p.giou(box2d),
        None => 2.0,
    }
}

pub fn translation_losses(
    b: &Box3D,
    anchors: &[Anchor],
    box2d: &Box2D,
    camera: &CameraModel,
    cfg: &OptimizerConfig,
) -> TranslationLosses {
    let inclusion = inclusion_loss(b, anchors, cfg.inclusion_buffer);
    let tightness = tightness_loss(b, anchors, cfg.tightness_buffer);
    let projection_2d = projection_loss(b, box2d, camera);
    TranslationLosses {
        inclusion,
        tightness,
        projection_2d,
        total: cfg.lambda_inclusion * inclusion + cfg.lambda_tightness * tightness + cfg.lambda_2d * projection_2d,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub bbox: Box3D,
    pub losses: TranslationLosses,
    pub grid_evaluations: usize,
    pub grid_best_loss: f64,
    pub iterations: usize,
    /// The local stage produced a non-finite loss; the grid optimum was kept.
    pub diverged: bool,
}

/// Grid search over center offsets in the box frame followed by bounded
/// quasi-Newton refinement. Only the center changes.
pub fn optimize_translation(
    candidate: &Box3D,
    anchors: &[Anchor],
    box2d: &Box2D,
    camera: &CameraModel,
    cfg: &OptimizerConfig,
) -> Result<TranslationResult> {
    cfg.validate()?;
    if anchors.is_empty() {
        return Err(Error::NoObjectPoints);
    }
    let rot = candidate.rotation();
    let c0 = candidate.center();
    let half = candidate.dims() * (0.5 * cfg.window_scale);
    let lo = -half;
    let hi = half;
    let at = |t: &Vector3<f64>| candidate.with_center(c0 + rot * t);
    let objective = |t: &Vector3<f64>| translation_losses(&at(t), anchors, box2d, camera, cfg).total;

    let n = cfg.grid_size;
    let step = |k: usize, axis: usize| {
        if n == 1 {
            0.0
        } else {
            lo[axis] + (hi[axis] - lo[axis]) * k as f64 / (n - 1) as f64
        }
    };
    let mut evaluations = 0;
    let mut best = (Vector3::zeros(), f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let t = Vector3::new(step(i, 0), step(j, 1), step(k, 2));
                let f = objective(&t);
                evaluations += 1;
                // ties keep the point closer to the initial center
                if f < best.1 || (f == best.1 && t.norm() < best.0.norm()) {
                    best = (t, f);
                }
            }
        }
    }
    let grid_best = best;

    let local = minimize_bounded(&objective, grid_best.0, lo, hi, cfg);
    let (t, diverged, iterations) = match local {
        Some((t, f, it)) if f.is_finite() && f <= grid_best.1 => (t, false, it),
        Some((_, _, it)) => (grid_best.0, true, it),
        None => (grid_best.0, true, 0),
    };
    let bbox = at(&t);
    Ok(TranslationResult {
        losses: translation_losses(&bbox, anchors, box2d, camera, cfg),
        bbox,
        grid_evaluations: evaluations,
        grid_best_loss: grid_best.1,
        iterations,
        diverged,
    })
}

fn clamp(x: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| x[i].clamp(lo[i], hi[i]))
}

fn numeric_gradient<F: Fn(&Vector3<f64>) -> f64>(f: &F, x: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>, h: f64) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let mut a = *x;
        let mut b = *x;
        a[i] = (x[i] + h).min(hi[i]);
        b[i] = (x[i] - h).max(lo[i]);
        let span = a[i] - b[i];
        if span <= 0.0 {
            0.0
        } else {
            (f(&a) - f(&b)) / span
        }
    })
}

/// Projected limited-memory BFGS on a box. Returns `(x, f(x), iterations)`, or
/// `None` when the start point is not finite. Only decreasing steps are taken.
fn minimize_bounded<F: Fn(&Vector3<f64>) -> f64>(
    f: &F,
    x0: Vector3<f64>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    cfg: &OptimizerConfig,
) -> Option<(Vector3<f64>, f64, usize)> {
    const MEMORY: usize = 8;
    let h = cfg.gradient_step;
    let mut x = clamp(&x0, &lo, &hi);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return None;
    }
    let mut g = numeric_gradient(f, &x, &lo, &hi, h);
    let mut hist: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        iterations += 1;
        // variables pinned at a bound with the gradient pushing outward stay fixed
        let free = Vector3::from_fn(|i, _| {
            let pinned = (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0);
            if pinned {
                0.0
            } else {
                1.0
            }
        });
        let gf = g.component_mul(&free);
        if gf.amax() < 1e-12 {
            break;
        }
        let mut d = two_loop(&gf, &hist).component_mul(&free) * -1.0;
        if d.dot(&gf) >= 0.0 {
            hist.clear();
            d = -gf;
        }
        if hist.is_empty() {
            // first step moves at most 5 cm
            d *= 0.05 / d.amax();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = clamp(&(x + d * step), &lo, &hi);
            let fxn = f(&xn);
            if !fxn.is_finite() {
                return Some((x, f64::NAN, iterations));
            }
            if fxn <= fx + 1e-4 * g.dot(&(xn - x)) && fxn <= fx {
                accepted = Some((xn, fxn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else { break };
        let gn = numeric_gradient(f, &xn, &lo, &hi, h);
        let s = xn - x;
        let y = gn - g;
        if s.dot(&y) > 1e-12 {
            hist.push((s, y));
            if hist.len() > MEMORY {
                hist.remove(0);
            }
        }
        let rel = (fx - fxn) / fx.abs().max(fxn.abs()).max(1.0);
        x = xn;
        fx = fxn;
        g = gn;
        if rel <= cfg.ftol {
            break;
        }
    }
    Some((x, fx, iterations))
}

fn two_loop(g: &Vector3<f64>, hist: &[(Vector3<f64>, Vector3<f64>)]) -> Vector3<f64> {
    let mut q = *g;
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y) in hist.iter().rev() {
        let rho = 1.0 / y.dot(s);
        let a = rho * s.dot(&q);
        q -= y * a;
        alphas.push((a, rho));
    }
    if let Some((s, y)) = hist.last() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y), (a, rho)) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q += s * (a - b);
    }
    q
}

/// Depth scale factor `0.7 * (annotated height / projected height) + 0.3 *
/// (annotated width / projected width)`.
pub fn height_scale_factor(b: &Box3D, box2d: &Box2D, camera: &CameraModel) -> Option<f64> {
    let p = camera.project_box(b, 1e-3)?;
    if p.width() <= 0.0 || p.height() <= 0.0 {
        return None;
    }
    Some(0.7 * box2d.height() / p.height() + 0.3 * box2d.width() / p.width())
}

/// Moves the box along its center ray so the center depth becomes `z / s`.
pub fn height_fallback(b: &Box3D, box2d: &Box2D, camera: &CameraModel) -> Option<Box3D> {
    let s = height_scale_factor(b, box2d, camera)?;
    if !(s.is_finite() && s > 0.0) {
        return None;
    }
    Some(b.with_center(b.center() / s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Optimized,
    Fallback,
}

/// Keeps the optimized box when its projection overlaps the annotation with IoU
/// at least `threshold`, otherwise the fallback.
pub fn adaptive_select(
    optimized: &Box3D,
    fallback: &Box3D,
    box2d: &Box2D,
    camera: &CameraModel,
    threshold: f64,
) -> (Box3D, Selection) {
    let iou = camera.project_box(optimized, 1e-3).map_or(0.0, |p| p.iou(box2d));
    if iou >= threshold {
        (*optimized, Selection::Optimized)
    } else {
        (*fallback, Selection::Fallback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraModel {
        CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn anchors(pts: &[Vector3<f64>]) -> Vec<Anchor> {
        pts.iter().map(|p| Anchor { point: *p, weight: 1.0 }).collect()
    }

    #[test]
    fn weights_examples() {
        let same = vec![Vector3::new(1.0, 2.0, 3.0); 10];
        let w = anchor_weights(&same, 0.5);
        assert!(w.weights.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        let pts: Vec<_> = (0..20).map(|i| Vector3::new(i as f64 * 0.1 - 1.0, (i % 3) as f64 * 0.2, 5.0 + (i % 5) as f64 * 0.1)).collect();
        let w0 = anchor_weights(&pts, 0.0);
        assert!(w0.weights.iter().all(|v| *v == 1.0));
        let w = anchor_weights(&pts, 0.5);
        assert!(w.weights.iter().all(|v| *v > 0.0 && *v <= 1.0));
        let a = sample_anchors(&pts, &w.weights, 256, 3).unwrap();
        assert_eq!(a.len(), 256);
        assert_eq!(a, sample_anchors(&pts, &w.weights, 256, 3).unwrap());
    }

    #[test]
    fn loss_zero_sets() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 5.0), Vector3::repeat(1.0)).unwrap();
        let corners: Vec<_> = b.corners().to_vec();
        let a = anchors(&corners);
        assert_eq!(inclusion_loss(&b, &a, 0.02), 0.0);
        assert_eq!(tightness_loss(&b, &a, 0.1), 0.0);
        let shifted = b.with_center(Vector3::new(0.5, 0.0, 5.0));
        assert!(inclusion_loss(&shifted, &a, 0.02) > 0.0);
        let inner = anchors(&[Vector3::new(0.0, 0.0, 5.0)]);
        assert!((tightness_loss(&b, &inner, 0.1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn grid_size_and_invariants() {
        let b = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 5.0), Vector3::repeat(1.0)).unwrap();
        let a = anchors(&b.corners());
        let b2 = cam().project_box(&b, 1e-3).unwrap();
        let r = optimize_translation(&b, &a, &b2, &cam(), &OptimizerConfig::default()).unwrap();
        assert_eq!(r.grid_evaluations, 125);
        assert_eq!(r.bbox.dims(), b.dims());
        assert_eq!(r.bbox.rotation(), b.rotation());
        assert!((r.bbox.center() - b.center()).norm() < 1e-6);
        assert!(r.losses.total <= r.grid_best_loss + 1e-9);
    }

    #[test]
    fn fallback_scaling_reprojects() {
        let c = cam();
        let b = Box3D::axis_aligned(Vector3::new(0.2, 0.1, 8.0), Vector3::repeat(1.0)).unwrap();
        let p = c.project_box(&b, 1e-3).unwrap();
        let big = Box2D::from_center_size(p.center()[0], p.center()[1], 2.0 * p.width(), 2.0 * p.height()).unwrap();
        assert!((height_scale_factor(&b, &big, &c).unwrap() - 2.0).abs() < 1e-12);
        let f = height_fallback(&b, &big, &c).unwrap();
        assert!((f.center().z - 4.0).abs() < 1e-12);
        let pf = c.project_box(&f, 1e-3).unwrap();
        assert!(pf.height() > 1.9 * p.height());
    }

    #[test]
    fn switch_rule() {
        let c = cam();
        let good = Box3D::axis_aligned(Vector3::new(0.0, 0.0, 5.0), Vector3::repeat(1.0)).unwrap();
        let other = good.with_center(Vector3::new(0.0, 0.0, 6.0));
        let b2 = c.project_box(&good, 1e-3).unwrap();
        assert_eq!(adaptive_select(&good, &other, &b2, &c, 0.4).1, Selection::Optimized);
        let far = good.with_center(Vector3::new(3.0, 0.0, 5.0));
        assert_eq!(adaptive_select(&far, &other, &b2, &c, 0.4).1, Selection::Fallback);
    }
}
