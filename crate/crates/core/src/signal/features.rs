//! Precomputed feature maps: `"SMILF"`, `u32` count, `u32` rows, `u32` cols
//! (little-endian), then `count` row-major `f64` LE matrices.

use super::MfccMap;
use crate::error::{Error, Result};
use std::path::Path;

const MAGIC: &[u8; 5] = b"SMILF";
const HEADER: usize = 5 + 12;

pub fn encode_features(maps: &[MfccMap]) -> Result<Vec<u8>> {
    let (rows, cols) = maps.first().map(|m| (m.frames(), m.coeffs())).unwrap_or((20, 20));
    let mut out = Vec::with_capacity(HEADER + maps.len() * rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(maps.len() as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for m in maps {
        if (m.frames(), m.coeffs()) != (rows, cols) {
            return Err(Error::InvalidArgument("feature maps must share one shape".into()));
        }
        for v in m.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Vec<MfccMap>> {
    const F: &str = "smilf";
    if bytes.len() < HEADER {
        return Err(Error::format(F, bytes.len() as u64, "truncated header"));
    }
    if &bytes[..5] != MAGIC {
        return Err(Error::format(F, 0, "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let (count, rows, cols) = (word(0), word(1), word(2));
    let need = HEADER + count * rows * cols * 8;
    if bytes.len() < need {
        return Err(Error::format(F, bytes.len() as u64, format!("expected {need} bytes for {count} maps")));
    }
    let mut maps = Vec::with_capacity(count);
    for (i, chunk) in bytes[HEADER..need].chunks_exact(rows * cols * 8).enumerate() {
        let values = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        maps.push(MfccMap::new(rows, cols, values).map_err(|e| Error::format(F, (HEADER + i * rows * cols * 8) as u64, e.to_string()))?);
    }
    Ok(maps)
}

pub fn write_features(path: &Path, maps: &[MfccMap]) -> Result<()> {
    std::fs::write(path, encode_features(maps)?)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<MfccMap>> {
    decode_features(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let m = MfccMap::new(20, 20, (0..400).map(|v| v as f64).collect()).unwrap();
        let bytes = encode_features(&[m.clone(), m.clone()]).unwrap();
        assert_eq!(&bytes[..5], b"SMILF");
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &20u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &20u32.to_le_bytes());
        assert_eq!(bytes.len(), 17 + 2 * 400 * 8);
        assert_eq!(&bytes[17 + 8..17 + 16], &1f64.to_le_bytes());
        assert_eq!(decode_features(&bytes).unwrap(), vec![m.clone(), m]);
    }

    #[test]
    fn truncated_body_is_rejected() {
        let m = MfccMap::new(20, 20, vec![0.5; 400]).unwrap();
        let bytes = encode_features(&[m]).unwrap();
        assert!(matches!(decode_features(&bytes[..100]), Err(Error::Format { .. })));
        assert!(matches!(decode_features(b"SMILX\0\0\0\0\0\0\0\0\0\0\0\0"), Err(Error::Format { offset: 0, .. })));
    }
}
