//! MNIST IDX files: big-endian magic `0x00000803` (u8 images) or
//! `0x00000801` (u8 labels) followed by big-endian `u32` dimensions.

use crate::error::{Error, Result};
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images as `[0, 1]` pixels plus their `rows × cols` geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
}

fn be_u32(bytes: &[u8], off: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(what, bytes.len() as u64, "truncated header"))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    const F: &str = "idx-images";
    let magic = be_u32(bytes, 0, F)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(F, 0, format!("magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, F)? as usize;
    let rows = be_u32(bytes, 8, F)? as usize;
    let cols = be_u32(bytes, 12, F)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::format(
            F,
            bytes.len() as u64,
            format!("file ends before {count} images of {rows}x{cols} ({need} bytes expected)"),
        ));
    }
    let images = bytes[16..need].chunks_exact(rows * cols).map(|px| px.iter().map(|&p| p as f64 / 255.0).collect()).collect();
    Ok(IdxImages { rows, cols, images })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const F: &str = "idx-labels";
    let magic = be_u32(bytes, 0, F)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(F, 0, format!("magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, F)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::format(F, bytes.len() as u64, format!("file ends before {count} labels")));
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Loads paired image and label files.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u8>)> {
    let imgs = parse_idx_images(&std::fs::read(images)?)?;
    let labs = parse_idx_labels(&std::fs::read(labels)?)?;
    if imgs.images.len() != labs.len() {
        return Err(Error::InvalidArgument(format!("{} images but {} labels", imgs.images.len(), labs.len())));
    }
    Ok((imgs, labs))
}

/// Pixels are clamped to `[0, 1]` and rounded to the nearest byte.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<f64>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        out.extend(img.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
