use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned image box in pixels, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Box2D {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("2D box"));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::InvalidBox(format!("empty 2D box ({x1}, {y1}, {x2}, {y2})")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_center_size(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    /// Tight box around a set of image points.
    pub fn enclosing<'a, I: IntoIterator<Item = &'a [f64; 2]>>(points: I) -> Result<Self> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Self::new(lo[0], lo[1], hi[0], hi[1])
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0]
    }

    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &Box2D) -> f64 {
        let inter = self.intersection_area(other);
        inter / (self.area() + other.area() - inter)
    }

    pub fn hull(&self, other: &Box2D) -> Box2D {
        Box2D {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Generalized IoU: `IoU - (hull - union) / hull`, in `(-1, 1]`.
    pub fn giou(&self, other: &Box2D) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        let hull = self.hull(other).area();
        inter / union - (hull - union) / hull
    }
}

pub fn giou2d(a: &Box2D, b: &Box2D) -> f64 {
    a.giou(b)
}

/// GIoU together with its gradient with respect to `a`'s `(x1, y1, x2, y2)`.
///
/// On ties between coordinates of `a` and `b` the one-sided derivative that moves
/// `a`'s coordinate is used.
pub fn giou_with_grad(a: &Box2D, b: &Box2D) -> (f64, [f64; 4]) {
    let (aw, ah) = (a.width(), a.height());
    let area_a = aw * ah;
    let area_b = b.area();

    // intersection extents and their derivative w.r.t. a's coordinates
    let ix1_from_a = a.x1 >= b.x1;
    let ix2_from_a = a.x2 <= b.x2;
    let iy1_from_a = a.y1 >= b.y1;
    let iy2_from_a = a.y2 <= b.y2;
    let iw_raw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih_raw = a.y2.min(b.y2) - a.y1.max(b.y1);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;

    let mut d_iw = [0.0; 4];
    let mut d_ih = [0.0; 4];
    if iw_raw > 0.0 && ih_raw > 0.0 {
        if ix1_from_a {
            d_iw[0] = -1.0;
        }
        if ix2_from_a {
            d_iw[2] = 1.0;
        }
        if iy1_from_a {
            d_ih[1] = -1.0;
        }
        if iy2_from_a {
            d_ih[3] = 1.0;
        }
    }
    let d_inter: [f64; 4] = std::array::from_fn(|k| d_iw[k] * ih + iw * d_ih[k]);
    let d_area_a = [-ah, -aw, ah, aw];

    let union = area_a + area_b - inter;
    let d_union: [f64; 4] = std::array::from_fn(|k| d_area_a[k] - d_inter[k]);

    let cw = a.x2.max(b.x2) - a.x1.min(b.x1);
    let ch = a.y2.max(b.y2) - a.y1.min(b.y1);
    let hull = cw * ch;
    let mut d_cw = [0.0; 4];
    let mut d_ch = [0.0; 4];
    if a.x1 <= b.x1 {
        d_cw[0] = -1.0;
    }
    if a.x2 >= b.x2 {
        d_cw[2] = 1.0;
    }
    if a.y1 <= b.y1 {
        d_ch[1] = -1.0;
    }
    if a.y2 >= b.y2 {
        d_ch[3] = 1.0;
    }
    let d_hull: [f64; 4] = std::array::from_fn(|k| d_cw[k] * ch + cw * d_ch[k]);

    // G = I/U + U/C - 1
    let g = inter / union + union / hull - 1.0;
    let grad = std::array::from_fn(|k| {
        d_inter[k] / union - inter * d_union[k] / (union * union) + d_union[k] / hull
            - union * d_hull[k] / (hull * hull)
    });
    (g, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> Box2D {
        Box2D::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn giou_examples() {
        let a = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(giou2d(&a, &a), 1.0);
        let far = b(2.0, 0.0, 3.0, 1.0);
        assert!((giou2d(&a, &far) + 1.0 / 3.0).abs() < 1e-15);
        let outer = b(0.0, 0.0, 2.0, 1.0);
        let inner = b(0.5, 0.0, 1.5, 1.0);
        assert!((giou2d(&outer, &inner) - 0.5).abs() < 1e-15);
        assert!((outer.iou(&inner) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_boxes() {
        assert!(Box2D::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(Box2D::new(0.0, 0.0, f64::INFINITY, 2.0).is_err());
    }

    #[test]
    fn giou_gradient_matches_finite_differences() {
        let t = b(10.0, 20.0, 50.0, 70.0);
        for a in [b(12.0, 18.0, 47.0, 75.0), b(60.0, 80.0, 90.0, 95.0), b(5.0, 25.0, 45.0, 60.0)] {
            let (g, grad) = giou_with_grad(&a, &t);
            assert!((g - a.giou(&t)).abs() < 1e-15);
            let h = 1e-5;
            for k in 0..4 {
                let mut p = [a.x1, a.y1, a.x2, a.y2];
                let mut m = p;
                p[k] += h;
                m[k] -= h;
                let fp = b(p[0], p[1], p[2], p[3]).giou(&t);
                let fm = b(m[0], m[1], m[2], m[3]).giou(&t);
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-7, "k={k} fd={fd} an={}", grad[k]);
            }
        }
    }
}
