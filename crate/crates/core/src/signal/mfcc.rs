use super::WaveClip;
use crate::error::{Error, Result};
use rustfft::{num_complex::Complex, FftPlanner};

pub const MFCC_FRAMES: usize = 20;
pub const MFCC_COEFFS: usize = 20;

/// A `frames × coefficients` cepstral map.
#[derive(Clone, Debug, PartialEq)]
pub struct MfccMap {
    frames: usize,
    coeffs: usize,
    values: Vec<f64>,
}

impl MfccMap {
    pub fn new(frames: usize, coeffs: usize, values: Vec<f64>) -> Result<Self> {
        if frames * coeffs != values.len() || frames == 0 || coeffs == 0 {
            return Err(Error::InvalidArgument(format!("{} values cannot form a {frames}x{coeffs} MFCC map", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite MFCC coefficient".into()));
        }
        Ok(Self { frames, coeffs, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, frame: usize, coeff: usize) -> f64 {
        self.values[frame * self.coeffs + coeff]
    }

    pub fn distance(&self, other: &MfccMap) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// How far consecutive frames are apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hop {
    Fixed(usize),
    /// Spread the frames over the whole clip, never closer than `min` samples.
    Auto {
        min: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MfccConfig {
    pub frame_len: usize,
    pub hop: Hop,
    pub fft_size: usize,
    pub num_filters: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub num_coeffs: usize,
    pub num_frames: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_len: 400,
            hop: Hop::Auto { min: 40 },
            fft_size: 512,
            num_filters: 26,
            low_hz: 0.0,
            high_hz: 4000.0,
            num_coeffs: MFCC_COEFFS,
            num_frames: MFCC_FRAMES,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    /// `key = value` pairs describing every DSP choice.
    pub fn describe(&self) -> Vec<(String, String)> {
        let hop = match self.hop {
            Hop::Fixed(h) => format!("{h}"),
            Hop::Auto { min } => format!("auto(min={min})"),
        };
        vec![
            ("mfcc.frame_len".into(), self.frame_len.to_string()),
            ("mfcc.hop".into(), hop),
            ("mfcc.fft_size".into(), self.fft_size.to_string()),
            ("mfcc.num_filters".into(), self.num_filters.to_string()),
            ("mfcc.low_hz".into(), self.low_hz.to_string()),
            ("mfcc.high_hz".into(), self.high_hz.to_string()),
            ("mfcc.num_coeffs".into(), self.num_coeffs.to_string()),
            ("mfcc.num_frames".into(), self.num_frames.to_string()),
            ("mfcc.pre_emphasis".into(), self.pre_emphasis.to_string()),
            ("mfcc.log_floor".into(), format!("{:e}", self.log_floor)),
            ("mfcc.window".into(), "hann".into()),
            ("mfcc.dct".into(), "dct-ii-orthonormal".into()),
        ]
    }

    fn hop_for(&self, len: usize) -> usize {
        let gaps = self.num_frames.saturating_sub(1).max(1);
        match self.hop {
            Hop::Fixed(h) => h.max(1),
            Hop::Auto { min } => (len.saturating_sub(self.frame_len) / gaps).max(min).max(1),
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the `fft_size / 2 + 1` power-spectrum bins.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    /// Left edge, peak and right edge in Hz, per filter.
    pub edges: Vec<(f64, f64, f64)>,
    /// `num_filters × bins`, row-major.
    pub weights: Vec<f64>,
    pub bins: usize,
}

impl MelFilterbank {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.1).collect()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    pub fn num_filters(&self) -> usize {
        self.edges.len()
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.num_filters()).map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum()).collect()
    }
}

pub fn mel_filterbank(num_filters: usize, fft_size: usize, sample_rate: u32, low: f64, high: f64) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= low && low < high && high <= nyquist) {
        return Err(Error::InvalidArgument(format!("mel range {low}..{high} Hz must satisfy 0 <= low < high <= {nyquist}")));
    }
    if num_filters < 2 || fft_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 filters and an FFT of at least 2 points (got {num_filters}, {fft_size})"
        )));
    }
    let (ml, mh) = (hz_to_mel(low), hz_to_mel(high));
    let points: Vec<f64> = (0..num_filters + 2).map(|i| mel_to_hz(ml + (mh - ml) * i as f64 / (num_filters + 1) as f64)).collect();
    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut weights = vec![0.0; num_filters * bins];
    let mut edges = Vec::with_capacity(num_filters);
    for m in 0..num_filters {
        let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
        edges.push((l, c, r));
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
            weights[m * bins + k] = w;
        }
        if weights[m * bins..(m + 1) * bins].iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(format!("mel filter {m} ({l:.1}-{r:.1} Hz) covers no FFT bin; use a larger FFT")));
        }
    }
    Ok(MelFilterbank { edges, weights, bins })
}

/// Orthonormal DCT-II, keeping the first `keep` coefficients.
pub fn dct2(input: &[f64], keep: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..keep)
        .map(|k| {
            let s: f64 = input
                .iter()
                .enumerate()
                .map(|(i, x)| x * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * scale
        })
        .collect()
}

pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()).collect()
}

/// Reusable MFCC pipeline; owns the FFT plan and filterbank.
pub struct MfccExtractor {
    config: MfccConfig,
    filterbank: MelFilterbank,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig) -> Result<Self> {
        if config.frame_len == 0 || config.frame_len > config.fft_size {
            return Err(Error::InvalidArgument(format!("frame length {} must be in 1..={}", config.frame_len, config.fft_size)));
        }
        if config.num_coeffs == 0 || config.num_coeffs > config.num_filters || config.num_frames == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {} coefficients from {} filters",
                config.num_coeffs, config.num_filters
            )));
        }
        let filterbank = mel_filterbank(config.num_filters, config.fft_size, super::wav::WAV_SAMPLE_RATE, config.low_hz, config.high_hz)?;
        let window = hann(config.frame_len);
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        Ok(Self { config, filterbank, window, fft })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Pre-emphasized signal padded (zeros, centered) or center-truncated to
    /// exactly `frame_len + (num_frames - 1) * hop` samples.
    pub fn normalize_length(&self, samples: &[f64]) -> (Vec<f64>, usize) {
        let c = &self.config;
        let mut emph = Vec::with_capacity(samples.len());
        let mut prev = 0.0;
        for (i, &s) in samples.iter().enumerate() {
            emph.push(if i == 0 { s } else { s - c.pre_emphasis * prev });
            prev = s;
        }
        let hop = c.hop_for(emph.len());
        let target = c.frame_len + (c.num_frames - 1) * hop;
        let out = if emph.len() >= target {
            let start = (emph.len() - target) / 2;
            emph[start..start + target].to_vec()
        } else {
            let mut out = vec![0.0; target];
            let start = (target - emph.len()) / 2;
            out[start..start + emph.len()].copy_from_slice(&emph);
            out
        };
        (out, hop)
    }

    /// Mel log-energies per frame, before the DCT.
    pub fn log_mel_energies(&self, clip: &WaveClip) -> Result<Vec<Vec<f64>>> {
        if clip.sample_rate() != super::wav::WAV_SAMPLE_RATE {
            return Err(Error::InvalidArgument(format!("MFCC extraction requires 8000 Hz audio, got {} Hz", clip.sample_rate())));
        }
        let c = &self.config;
        let (signal, hop) = self.normalize_length(clip.samples());
        let mut buf = vec![Complex::new(0.0, 0.0); c.fft_size];
        let mut frames = Vec::with_capacity(c.num_frames);
        for f in 0..c.num_frames {
            let start = f * hop;
            buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
            for (i, (b, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                b.re = signal[start + i] * w;
            }
            self.fft.process(&mut buf);
            let power: Vec<f64> = buf[..self.filterbank.bins].iter().map(|z| z.norm_sqr()).collect();
            frames.push(self.filterbank.apply(&power).into_iter().map(|e| e.max(c.log_floor).ln()).collect());
        }
        Ok(frames)
    }

    /// Unstandardized MFCC map.
    pub fn mfcc(&self, clip: &WaveClip) -> Result<MfccMap> {
        let frames = self.log_mel_energies(clip)?;
        let values = frames.iter().flat_map(|e| dct2(e, self.config.num_coeffs)).collect();
        MfccMap::new(self.config.num_frames, self.config.num_coeffs, values)
    }
}

/// One-shot [`MfccExtractor::mfcc`].
pub fn mfcc(clip: &WaveClip, config: &MfccConfig) -> Result<MfccMap> {
    MfccExtractor::new(config.clone())?.mfcc(clip)
}

/// Per-coefficient z-scoring fitted on a training corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct MfccStandardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MfccStandardizer {
    pub fn fit(maps: &[MfccMap]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::InsufficientData("no MFCC maps to standardize".into()))?;
        let coeffs = first.coeffs();
        let mut sum = vec![0.0; coeffs];
        let mut count = 0usize;
        for m in maps {
            if m.coeffs() != coeffs {
                return Err(Error::InvalidArgument("MFCC maps with differing coefficient counts".into()));
            }
            for row in m.values().chunks(coeffs) {
                sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; coeffs];
        for m in maps {
            for row in m.values().chunks(coeffs) {
                for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - mu) * (x - mu);
                }
            }
        }
        let std = var.iter().map(|v| (v / count as f64).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, map: &MfccMap) -> MfccMap {
        let coeffs = map.coeffs();
        let values =
            map.values().chunks(coeffs).flat_map(|row| row.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.std[j])).collect();
        MfccMap { frames: map.frames(), coeffs, values }
    }
}
