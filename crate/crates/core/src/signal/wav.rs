//! 16-bit PCM mono WAV at 8 kHz.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Raw audio clip with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl WaveClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite audio sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

pub const WAV_SAMPLE_RATE: u32 = 8000;

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Decodes RIFF/WAVE bytes holding mono 16-bit PCM at 8000 Hz.
pub fn decode_wav(bytes: &[u8]) -> Result<WaveClip> {
    const F: &str = "wav";
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format(F, 0, "missing RIFF/WAVE header"));
    }
    let mut off = 12usize;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4) as usize;
        let body = off + 8;
        if body + size > bytes.len() {
            return Err(Error::format(F, off as u64, format!("chunk {:?} truncated", String::from_utf8_lossy(id))));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format(F, body as u64, "fmt chunk too short"));
                }
                format = Some((u16_at(bytes, body), u16_at(bytes, body + 2), u32_at(bytes, body + 4), u16_at(bytes, body + 14)));
            }
            b"data" => {
                let (tag, channels, rate, bits) = format.ok_or_else(|| Error::format(F, off as u64, "data chunk before fmt chunk"))?;
                if tag != 1 || bits != 16 {
                    return Err(Error::format(F, off as u64, format!("unsupported encoding (tag {tag}, {bits} bits)")));
                }
                if channels != 1 {
                    return Err(Error::format(F, off as u64, format!("expected mono, found {channels} channels")));
                }
                if rate != WAV_SAMPLE_RATE {
                    return Err(Error::format(F, off as u64, format!("expected 8000 Hz, found {rate} Hz")));
                }
                let samples = bytes[body..body + size - size % 2]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return WaveClip::new(samples, rate);
            }
            _ => {}
        }
        off = body + size + size % 2;
    }
    Err(Error::format(F, off as u64, "no data chunk"))
}

pub fn read_wav(path: &Path) -> Result<WaveClip> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_wav(&bytes)
}

/// Encodes a clip as mono 16-bit PCM, clamping to the representable range.
pub fn encode_wav(clip: &WaveClip) -> Vec<u8> {
    let n = clip.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, clip: &WaveClip) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_wav(clip))?;
    Ok(())
}
