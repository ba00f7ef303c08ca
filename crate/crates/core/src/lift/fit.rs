use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::rotation::{align_y_to, r_y};
use crate::geometry::{convex_hull_2d, polygon_area, Box3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub ransac_iterations: usize,
    /// Distance (m) from the rectangle within which a footprint point is an inlier.
    pub inlier_threshold: f64,
    pub percentile_low: f64,
    pub percentile_high: f64,
    /// When set, a zero-height point set yields a box of this height instead of an error.
    pub min_height: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ransac_iterations: 200,
            inlier_threshold: 0.05,
            percentile_low: 1.0,
            percentile_high: 99.0,
            min_height: None,
        }
    }
}

pub const MIN_FIT_POINTS: usize = 10;

/// Linear-interpolated percentile of sorted data, `q` in `[0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Frame whose +y axis is the (sign-normalized) vertical direction. The sign is
/// chosen so that +y points along camera +y as far as possible, so the default
/// vertical `(0, -1, 0)` gives the identity.
pub fn vertical_frame(vertical: &Vector3<f64>) -> Result<UnitQuaternion<f64>> {
    let n = vertical.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::ZeroDirection);
    }
    let v = if vertical.y < 0.0 { -vertical / n } else { vertical / n };
    Ok(align_y_to(&v))
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    /// Unit direction of the rectangle's first axis in footprint coordinates.
    axis: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Rect {
    fn coords(&self, p: &[f64; 2]) -> [f64; 2] {
        let [c, s] = self.axis;
        [c * p[0] + s * p[1], -s * p[0] + c * p[1]]
    }

    fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    /// Distance from `p` to the rectangle outline.
    fn outline_distance(&self, p: &[f64; 2]) -> f64 {
        let q = self.coords(p);
        let dx = (self.lo[0] - q[0]).max(q[0] - self.hi[0]);
        let dy = (self.lo[1] - q[1]).max(q[1] - self.hi[1]);
        if dx <= 0.0 && dy <= 0.0 {
            (-dx).min(-dy)
        } else {
            (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
        }
    }

    /// Distance from `p` to the rectangle region, 0 inside.
    fn distance(&self, p: &[f64; 2]) -> f64 {
        let q = self.coords(p);
        let dx = (self.lo[0] - q[0]).max(q[0] - self.hi[0]).max(0.0);
        let dy = (self.lo[1] - q[1]).max(q[1] - self.hi[1]).max(0.0);
        dx.hypot(dy)
    }

    fn from_extent(axis: [f64; 2], pts: &[[f64; 2]], low: f64, high: f64) -> Self {
        let r = Rect {
            axis,
            lo: [0.0; 2],
            hi: [0.0; 2],
        };
        let (mut a, mut b): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| {
            let q = r.coords(p);
            (q[0], q[1])
        }).unzip();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        Rect {
            axis,
            lo: [percentile(&a, low), percentile(&b, low)],
            hi: [percentile(&a, high), percentile(&b, high)],
        }
    }

    fn inliers(&self, pts: &[[f64; 2]], thr: f64) -> usize {
        pts.iter().filter(|p| self.distance(p) <= thr).count()
    }

    fn outline_inliers(&self, pts: &[[f64; 2]], thr: f64) -> usize {
        pts.iter().filter(|p| self.outline_distance(p) <= thr).count()
    }
}

/// Minimum-area enclosing rectangle by checking every hull edge direction.
/// Rectangles within 2% of the minimum area compete on outline inliers, which
/// settles the near-ties produced by partially observed footprints.
fn min_area_rect(pts: &[[f64; 2]], thr: f64) -> Result<Rect> {
    let hull = convex_hull_2d(pts);
    if hull.len() < 3 {
        return Err(Error::DegeneratePoints("footprint is collinear".into()));
    }
    let extent = hull
        .iter()
        .flat_map(|p| hull.iter().map(move |q| (p[0] - q[0]).hypot(p[1] - q[1])))
        .fold(0.0, f64::max);
    if polygon_area(&hull) <= 1e-9 * extent * extent {
        return Err(Error::DegeneratePoints("footprint is collinear".into()));
    }
    let mut rects = Vec::with_capacity(hull.len());
    for i in 0..hull.len() {
        let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = dx.hypot(dy);
        if len <= 0.0 {
            continue;
        }
        rects.push(Rect::from_extent([dx / len, dy / len], &hull, 0.0, 100.0));
    }
    let min_area = rects.iter().map(Rect::area).fold(f64::INFINITY, f64::min);
    let best = rects
        .iter()
        .filter(|r| r.area() <= 1.02 * min_area + 1e-12)
        .map(|r| (r.outline_inliers(pts, thr), r))
        .max_by(|(na, ra), (nb, rb)| na.cmp(nb).then(rb.area().total_cmp(&ra.area())))
        .map(|(_, r)| *r)
        .unwrap();
    Ok(best)
}

/// Gravity-aligned oriented box around `points`.
///
/// Points are expressed in the vertical frame; RANSAC over two-point direction
/// hypotheses selects footprint inliers within a threshold of a percentile rectangle,
/// and the final footprint is the minimum-area rectangle of those inliers. The
/// height spans the configured percentiles of the vertical coordinate. The
/// result is normalized (`w <= l`, yaw in `[0, pi)` about the vertical).
pub fn fit_oriented_box(points: &[Vector3<f64>], vertical: &Vector3<f64>, cfg: &FitConfig, seed: u64) -> Result<Box3D> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::DegeneratePoints(format!(
            "{} points, at least {MIN_FIT_POINTS} needed",
            points.len()
        )));
    }
    let frame = vertical_frame(vertical)?;
    let local: Vec<Vector3<f64>> = points.iter().map(|p| frame.inverse_transform_vector(p)).collect();
    let foot: Vec<[f64; 2]> = local.iter().map(|p| [p.x, p.z]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Rect)> = None;
    for _ in 0..cfg.ransac_iterations {
        let i = rng.random_range(0..foot.len());
        let j = rng.random_range(0..foot.len());
        let (dx, dy) = (foot[j][0] - foot[i][0], foot[j][1] - foot[i][1]);
        let len = dx.hypot(dy);
        if len < 1e-6 {
            continue;
        }
        let rect = Rect::from_extent([dx / len, dy / len], &foot, cfg.percentile_low, cfg.percentile_high);
        let n = rect.inliers(&foot, cfg.inlier_threshold);
        let better = match &best {
            None => true,
            Some((bn, br)) => n > *bn || (n == *bn && rect.area() < br.area()),
        };
        if better {
            best = Some((n, rect));
        }
    }
    let inliers: Vec<[f64; 2]> = match best {
        Some((_, rect)) => foot
            .iter()
            .copied()
            .filter(|p| rect.distance(p) <= cfg.inlier_threshold)
            .collect(),
        None => return Err(Error::DegeneratePoints("footprint points coincide".into())),
    };
    let rect = min_area_rect(&inliers, cfg.inlier_threshold)?;

    let mut ys: Vec<f64> = local.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    let (y0, y1) = (percentile(&ys, cfg.percentile_low), percentile(&ys, cfg.percentile_high));
    let (y_mid, height) = if y1 - y0 > 1e-6 {
        (0.5 * (y0 + y1), y1 - y0)
    } else {
        match cfg.min_height {
            Some(h) if h > 0.0 => (0.5 * (y0 + y1), h),
            _ => return Err(Error::DegeneratePoints("points have no vertical extent".into())),
        }
    };

    // rect axis 0 -> local z (length), axis 1 -> local x
    let [c, s] = rect.axis;
    let mid = [0.5 * (rect.lo[0] + rect.hi[0]), 0.5 * (rect.lo[1] + rect.hi[1])];
    let fx = c * mid[0] - s * mid[1];
    let fz = s * mid[0] + c * mid[1];
    let yaw = c.atan2(s);
    let center = frame * Vector3::new(fx, y_mid, fz);
    let dims = Vector3::new(rect.hi[1] - rect.lo[1], height, rect.hi[0] - rect.lo[0]);
    let rot = frame * r_y(yaw);
    Ok(Box3D::new(center, dims, rot)?.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Uniform samples on the surface of `b`.
    fn surface_sample(b: &Box3D, n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = b.dims();
        (0..n)
            .map(|_| {
                let axis = rng.random_range(0..3);
                let mut q = Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                );
                q[axis] = if rng.random_bool(0.5) { 0.5 } else { -0.5 };
                b.rotation() * q.component_mul(&d) + b.center()
            })
            .collect()
    }

    #[test]
    fn unit_cube() {
        let b = Box3D::axis_aligned(Vector3::new(0.3, 0.5, 6.0), Vector3::repeat(1.0)).unwrap();
        let pts = surface_sample(&b, 3000, 1);
        let f = fit_oriented_box(&pts, &Vector3::new(0.0, -1.0, 0.0), &FitConfig::default(), 7).unwrap();
        for i in 0..3 {
            assert!((f.dims()[i] - 1.0).abs() < 0.02, "{:?}", f.dims());
        }
        let yaw = f.yaw().to_degrees().rem_euclid(90.0);
        assert!(yaw.min(90.0 - yaw) < 1.0, "yaw {yaw}");
        assert!((f.center() - b.center()).norm() < 0.02);
    }

    #[test]
    fn yawed_box() {
        let b = Box3D::new(Vector3::new(0.0, 0.5, 6.0), Vector3::new(0.8, 1.0, 1.6), r_y(30f64.to_radians())).unwrap();
        let pts = surface_sample(&b, 4000, 2);
        let f = fit_oriented_box(&pts, &Vector3::new(0.0, -1.0, 0.0), &FitConfig::default(), 3).unwrap();
        let yaw = f.yaw().to_degrees().rem_euclid(180.0);
        assert!((yaw - 30.0).abs() < 2.0, "yaw {yaw}");
        assert!((f.dims() - Vector3::new(0.8, 1.0, 1.6)).abs().max() < 0.03);
    }

    #[test]
    fn degenerate_inputs() {
        let plane: Vec<_> = (0..100)
            .map(|i| Vector3::new((i % 10) as f64 * 0.1, 1.0, 5.0 + (i / 10) as f64 * 0.1))
            .collect();
        let cfg = FitConfig::default();
        assert!(fit_oriented_box(&plane, &Vector3::new(0.0, -1.0, 0.0), &cfg, 0).is_err());
        let relaxed = FitConfig {
            min_height: Some(0.01),
            ..cfg
        };
        let b = fit_oriented_box(&plane, &Vector3::new(0.0, -1.0, 0.0), &relaxed, 0).unwrap();
        assert_eq!(b.dims().y, 0.01);

        let line: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, (i % 3) as f64, 5.0)).collect();
        assert!(fit_oriented_box(&line, &Vector3::new(0.0, -1.0, 0.0), &cfg, 0).is_err());
        assert!(fit_oriented_box(&line[..5], &Vector3::new(0.0, -1.0, 0.0), &cfg, 0).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 2.0);
        assert_eq!(percentile(&v, 12.5), 0.5);
        assert_eq!(percentile(&v, 100.0), 4.0);
    }
}
