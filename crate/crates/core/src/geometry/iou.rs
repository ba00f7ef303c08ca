//! Exact volumetric IoU of oriented boxes by convex polyhedron clipping, and a
//! Monte-Carlo estimator used for cross-checking.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Box3D;

/// Boxes with a volume below this are treated as degenerate.
pub const MIN_VOLUME: f64 = 1e-12;

const PLANE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Iou3d {
    pub value: f64,
    /// Set when either box is below [`MIN_VOLUME`]; `value` is then 0.
    pub degenerate: bool,
    pub intersection_volume: f64,
}

/// Convex polyhedron as a list of planar polygonal faces.
#[derive(Debug, Clone)]
struct Polyhedron {
    faces: Vec<Vec<Vector3<f64>>>,
}

// local corner indices (see CORNER_SIGNS) of each face, counter-clockwise seen from outside
const BOX_FACES: [[usize; 4]; 6] = [
    [0, 1, 3, 2], // -x
    [4, 6, 7, 5], // +x
    [0, 4, 5, 1], // -y
    [2, 3, 7, 6], // +y
    [0, 2, 6, 4], // -z
    [1, 5, 7, 3], // +z
];

impl Polyhedron {
    fn from_box(b: &Box3D) -> Self {
        let c = b.corners();
        Self {
            faces: BOX_FACES.iter().map(|f| f.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    /// Keeps the part with `n . p <= d`.
    fn clip(self, n: &Vector3<f64>, d: f64) -> Self {
        let outside = |p: &Vector3<f64>| n.dot(p) - d > PLANE_EPS;
        let any_out = self.faces.iter().flatten().any(outside);
        if !any_out {
            return self;
        }
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cap: Vec<Vector3<f64>> = Vec::new();
        for face in &self.faces {
            let mut out = Vec::with_capacity(face.len() + 2);
            for i in 0..face.len() {
                let a = face[i];
                let b = face[(i + 1) % face.len()];
                let da = n.dot(&a) - d;
                let db = n.dot(&b) - d;
                let a_in = da <= PLANE_EPS;
                let b_in = db <= PLANE_EPS;
                if a_in {
                    out.push(a);
                    if da.abs() <= PLANE_EPS {
                        cap.push(a);
                    }
                }
                if a_in != b_in && (da.abs() > PLANE_EPS && db.abs() > PLANE_EPS) {
                    let t = da / (da - db);
                    let p = a + (b - a) * t;
                    out.push(p);
                    cap.push(p);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if let Some(face) = order_cap(cap, n) {
            faces.push(face);
        }
        Self { faces }
    }

    /// Volume by pyramid decomposition from the vertex centroid.
    fn volume(&self) -> f64 {
        let verts: Vec<_> = self.faces.iter().flatten().collect();
        if verts.len() < 4 {
            return 0.0;
        }
        let apex = verts.iter().fold(Vector3::zeros(), |acc, p| acc + **p) / verts.len() as f64;
        let mut vol = 0.0;
        for face in &self.faces {
            let p0 = face[0] - apex;
            for i in 1..face.len() - 1 {
                let p1 = face[i] - apex;
                let p2 = face[i + 1] - apex;
                vol += p0.dot(&p1.cross(&p2)).abs();
            }
        }
        vol / 6.0
    }
}

fn order_cap(mut pts: Vec<Vector3<f64>>, n: &Vector3<f64>) -> Option<Vec<Vector3<f64>>> {
    // dedup
    let mut uniq: Vec<Vector3<f64>> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if !uniq.iter().any(|q| (q - p).norm() < 1e-10) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let centroid = uniq.iter().fold(Vector3::zeros(), |acc, p| acc + p) / uniq.len() as f64;
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    let mut keyed: Vec<(f64, Vector3<f64>)> = uniq
        .into_iter()
        .map(|p| {
            let r = p - centroid;
            (r.dot(&v).atan2(r.dot(&u)), p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Exact intersection volume of two oriented boxes.
pub fn intersection_volume(a: &Box3D, b: &Box3D) -> f64 {
    let r = a.rotation_matrix();
    let c = a.center();
    let mut poly = Polyhedron::from_box(b);
    for i in 0..3 {
        let axis: Vector3<f64> = r.column(i).into();
        let half = 0.5 * a.dims()[i];
        let off = axis.dot(&c);
        poly = poly.clip(&axis, off + half);
        if poly.faces.is_empty() {
            return 0.0;
        }
        poly = poly.clip(&(-axis), -off + half);
        if poly.faces.is_empty() {
            return 0.0;
        }
    }
    poly.volume()
}

pub fn iou3d_checked(a: &Box3D, b: &Box3D) -> Iou3d {
    let (va, vb) = (a.volume(), b.volume());
    if va < MIN_VOLUME || vb < MIN_VOLUME {
        return Iou3d {
            value: 0.0,
            degenerate: true,
            intersection_volume: 0.0,
        };
    }
    // quick reject on bounding spheres
    if (a.center() - b.center()).norm() > a.radius() + b.radius() {
        return Iou3d {
            value: 0.0,
            degenerate: false,
            intersection_volume: 0.0,
        };
    }
    let inter = intersection_volume(a, b).min(va.min(vb));
    Iou3d {
        value: (inter / (va + vb - inter)).clamp(0.0, 1.0),
        degenerate: false,
        intersection_volume: inter,
    }
}

/// Volume of intersection over volume of union; 0 for degenerate boxes.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    iou3d_checked(a, b).value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloIou {
    pub iou: f64,
    /// Binomial standard error of the estimate.
    pub std_err: f64,
    pub samples_in_union: u64,
}

struct FastBox {
    rt: Matrix3<f64>,
    center: Vector3<f64>,
    half: Vector3<f64>,
}

impl FastBox {
    fn new(b: &Box3D) -> Self {
        Self {
            rt: b.rotation_matrix().transpose(),
            center: b.center(),
            half: b.dims() / 2.0,
        }
    }

    #[inline]
    fn contains(&self, p: &Vector3<f64>) -> bool {
        let q = self.rt * (p - self.center);
        q.x.abs() <= self.half.x && q.y.abs() <= self.half.y && q.z.abs() <= self.half.z
    }
}

/// Estimates IoU by uniform sampling in the axis-aligned bounding box of both boxes.
/// Deterministic for a given `seed`, independent of the thread count.
pub fn monte_carlo_iou3d(a: &Box3D, b: &Box3D, samples: u64, seed: u64) -> MonteCarloIou {
    const CHUNK: u64 = 1 << 16;
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in a.corners().iter().chain(b.corners().iter()) {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let (fa, fb) = (FastBox::new(a), FastBox::new(b));
    let chunks = samples.div_ceil(CHUNK);
    let (both, either) = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let n = CHUNK.min(samples - ci * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ci.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (mut both, mut either) = (0u64, 0u64);
            for _ in 0..n {
                let p = Vector3::new(
                    rng.random_range(lo.x..=hi.x),
                    rng.random_range(lo.y..=hi.y),
                    rng.random_range(lo.z..=hi.z),
                );
                let (ia, ib) = (fa.contains(&p), fb.contains(&p));
                both += (ia && ib) as u64;
                either += (ia || ib) as u64;
            }
            (both, either)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let iou = if either == 0 { 0.0 } else { both as f64 / either as f64 };
    let std_err = if either == 0 {
        0.0
    } else {
        (iou * (1.0 - iou) / either as f64).sqrt()
    };
    MonteCarloIou {
        iou,
        std_err,
        samples_in_union: either,
    }
}
