//! Binary depth maps: `WD3D`, format version, width, height, then row-major
//! little-endian `f32` meters with `0.0` marking invalid pixels.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEPTH_MAGIC: &[u8; 4] = b"WD3D";
pub const DEPTH_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} depth values for a {width}x{height} map",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Format(format!("depth value {v} is not a finite non-negative number")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.0).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(DEPTH_MAGIC);
        out.extend_from_slice(&DEPTH_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != DEPTH_MAGIC {
            return Err(Error::Format("missing WD3D header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != DEPTH_VERSION {
            return Err(Error::Format(format!("unsupported depth format version {version}")));
        }
        let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let payload = &bytes[HEADER_LEN..];
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("depth map size overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {expected} for {width}x{height}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(width, height, data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&super::read_bytes(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::atomic_write(path, |w| w.write_all(&self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bytes() {
        let d = DepthMap::new(3, 2, vec![0.0, 1.5, 2.0, 3.25, 0.0, 100.0]).unwrap();
        let b = d.to_bytes();
        assert_eq!(&b[..4], b"WD3D");
        assert_eq!(b.len(), 14 + 24);
        assert_eq!(DepthMap::from_bytes(&b).unwrap(), d);
        assert_eq!(d.valid_count(), 4);
    }

    #[test]
    fn rejects_malformed() {
        let d = DepthMap::filled(2, 2, 1.0);
        let mut b = d.to_bytes();
        b.pop();
        assert!(DepthMap::from_bytes(&b).is_err());
        let mut b = d.to_bytes();
        b[0] = b'X';
        assert!(DepthMap::from_bytes(&b).is_err());
        let mut b = d.to_bytes();
        b[14..18].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(DepthMap::from_bytes(&b).is_err());
    }
}
