//! Binary mask files: `WM2D`, format version, width, height, then one byte per
//! pixel (0 or 1), row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::lift::Mask2D;

pub const MASK_MAGIC: &[u8; 4] = b"WM2D";
pub const MASK_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;

pub fn mask_to_bytes(mask: &Mask2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.data.len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&MASK_VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.width as u32).to_le_bytes());
    out.extend_from_slice(&(mask.height as u32).to_le_bytes());
    out.extend(mask.data.iter().map(|&b| b as u8));
    out
}

pub fn mask_from_bytes(bytes: &[u8]) -> Result<Mask2D> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MASK_MAGIC {
        return Err(Error::Format("missing WM2D header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MASK_VERSION {
        return Err(Error::Format(format!("unsupported mask format version {version}")));
    }
    let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != width.checked_mul(height) {
        return Err(Error::Format(format!(
            "mask payload is {} bytes, expected {width}x{height}",
            payload.len()
        )));
    }
    let data = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Format(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Mask2D::new(width, height, data)
}

pub fn read_mask(path: &Path) -> Result<Mask2D> {
    mask_from_bytes(&super::read_bytes(path)?)
}

pub fn write_mask(mask: &Mask2D, path: &Path) -> Result<()> {
    super::atomic_write(path, |w| w.write_all(&mask_to_bytes(mask)))
}
