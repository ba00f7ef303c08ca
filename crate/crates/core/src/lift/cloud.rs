use nalgebra::{Vector2, Vector3};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::io::DepthMap;

/// Binary per-pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask2D {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} mask values for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// One step of binary erosion with a 3x3 structuring element; pixels
    /// beyond the image count as background.
    pub fn eroded(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = vec![false; w * h];
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                out[y * w + x] = (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| self.data[yy * w + xx]));
            }
        }
        Self {
            width: w,
            height: h,
            data: out,
        }
    }

    /// Pixel bounding box `(x1, y1, x2, y2)` in continuous coordinates, or `None` if empty.
    pub fn bounds(&self) -> Option<[f64; 4]> {
        let mut b: Option<[usize; 4]> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    b = Some(match b {
                        None => [x, y, x, y],
                        Some([x1, y1, x2, y2]) => [x1.min(x), y1.min(y), x2.max(x), y2.max(y)],
                    });
                }
            }
        }
        b.map(|[x1, y1, x2, y2]| [x1 as f64, y1 as f64, (x2 + 1) as f64, (y2 + 1) as f64])
    }
}

/// Backprojected depth map with pixel provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCloud {
    pub points: Vec<Vector3<f64>>,
    /// Source pixel `(x, y)` of each point.
    pub pixels: Vec<(u32, u32)>,
    pub instance_ids: Option<Vec<u32>>,
    pub camera: CameraModel,
    pub width: usize,
    pub height: usize,
}

impl SceneCloud {
    /// Backprojects every valid pixel through its center. An all-invalid map
    /// yields an empty cloud (see [`SceneCloud::is_empty`]).
    pub fn from_depth(depth: &DepthMap, camera: &CameraModel) -> Result<Self> {
        if depth.width != camera.width as usize || depth.height != camera.height as usize {
            return Err(Error::ShapeMismatch(format!(
                "depth map is {}x{} but the camera image is {}x{}",
                depth.width, depth.height, camera.width, camera.height
            )));
        }
        let mut points = Vec::with_capacity(depth.valid_count());
        let mut pixels = Vec::with_capacity(points.capacity());
        for y in 0..depth.height {
            for x in 0..depth.width {
                let d = depth.get(x, y);
                if d > 0.0 {
                    let p = camera.backproject(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5), d as f64)?;
                    points.push(p);
                    pixels.push((x as u32, y as u32));
                }
            }
        }
        Ok(Self {
            points,
            pixels,
            instance_ids: None,
            camera: *camera,
            width: depth.width,
            height: depth.height,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Points whose source pixel survives one erosion of `mask`.
pub fn extract_object_points(cloud: &SceneCloud, mask: &Mask2D) -> Result<Vec<Vector3<f64>>> {
    if mask.width != cloud.width || mask.height != cloud.height {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{} but the depth map is {}x{}",
            mask.width, mask.height, cloud.width, cloud.height
        )));
    }
    let eroded = mask.eroded();
    let pts: Vec<_> = cloud
        .points
        .iter()
        .zip(&cloud.pixels)
        .filter(|(_, &(x, y))| eroded.get(x as usize, y as usize))
        .map(|(p, _)| *p)
        .collect();
    if pts.is_empty() {
        return Err(Error::NoObjectPoints);
    }
    Ok(pts)
}
