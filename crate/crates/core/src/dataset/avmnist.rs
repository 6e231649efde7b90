//! avMNIST-style corpora on disk.
//!
//! [`generate_avmnist_corpus`] writes an MNIST-format image/label pair and a
//! directory of spoken-digit WAV clips (`{digit}_{speaker}_{take}.wav`), so
//! the full ingest path can run where the public corpora are unavailable.
//! [`prepare_dataset`] turns such inputs into a prepared directory that
//! [`load_prepared`] reads back.

use super::idx::{encode_idx_images, encode_idx_labels, load_idx_images};
use super::manifest::{read_manifest, write_manifest, Manifest};
use super::split::{pair_by_class, split_dataset};
use super::{BimodalSample, MaskedDataset, Schema, Split};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::random::{self, normal_vec, streams};
use crate::signal::{mfcc_batch, read_features, read_wav, write_features, write_wav, MfccConfig, MfccMap, MfccStandardizer, WaveClip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Knobs for the generated corpus. The defaults degrade both modalities so
/// neither alone is sufficient, in the spirit of the noisy avMNIST variant.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub per_class: usize,
    pub seed: u64,
    /// Standard deviation of additive pixel noise.
    pub pixel_noise: f64,
    /// Probability that a block of the digit is erased.
    pub occlusion: f64,
    /// Range of the per-clip signal-to-noise ratio in dB.
    pub snr_db: (f64, f64),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { per_class: 150, seed: 0, pixel_noise: 0.25, occlusion: 0.5, snr_db: (-6.0, 6.0) }
    }
}

pub const IMAGES_FILE: &str = "images.idx3-ubyte";
pub const LABELS_FILE: &str = "labels.idx1-ubyte";
pub const AUDIO_DIR: &str = "audio";

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Stroke {
    (0..=n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            (cx + rx * t.sin(), cy - ry * t.cos())
        })
        .collect()
}

/// Unit-box polylines (x right, y down) per digit.
fn digit_strokes(d: usize) -> Vec<Stroke> {
    match d {
        0 => vec![ellipse(0.5, 0.5, 0.3, 0.45, 20)],
        1 => vec![vec![(0.35, 0.2), (0.52, 0.05), (0.52, 0.95)]],
        2 => vec![vec![(0.2, 0.3), (0.3, 0.1), (0.5, 0.03), (0.7, 0.1), (0.78, 0.3), (0.65, 0.5), (0.2, 0.95), (0.82, 0.95)]],
        3 => vec![vec![
            (0.2, 0.1),
            (0.5, 0.03),
            (0.75, 0.15),
            (0.75, 0.35),
            (0.45, 0.5),
            (0.78, 0.65),
            (0.78, 0.85),
            (0.5, 0.97),
            (0.2, 0.88),
        ]],
        4 => vec![vec![(0.65, 0.95), (0.65, 0.05), (0.15, 0.65), (0.85, 0.65)]],
        5 => vec![vec![(0.8, 0.05), (0.3, 0.05), (0.25, 0.45), (0.55, 0.4), (0.78, 0.55), (0.78, 0.8), (0.5, 0.97), (0.2, 0.88)]],
        6 => {
            vec![vec![(0.7, 0.05), (0.4, 0.25), (0.25, 0.6), (0.3, 0.88), (0.5, 0.97), (0.72, 0.85), (0.75, 0.65), (0.55, 0.5), (0.3, 0.6)]]
        }
        7 => vec![vec![(0.18, 0.05), (0.82, 0.05), (0.4, 0.95)]],
        8 => vec![ellipse(0.5, 0.27, 0.22, 0.22, 16), ellipse(0.5, 0.72, 0.27, 0.25, 16)],
        _ => vec![ellipse(0.5, 0.3, 0.25, 0.24, 16), vec![(0.75, 0.3), (0.7, 0.95)]],
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one jittered, affinely distorted, noisy and possibly occluded
/// 28×28 digit with pixels in `[0, 1]`.
fn render_digit(d: usize, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let angle: f64 = rng.random_range(-0.3..0.3);
    let scale: f64 = rng.random_range(0.8..1.1);
    let shear: f64 = rng.random_range(-0.25..0.25);
    let (tx, ty): (f64, f64) = (rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
    let width: f64 = rng.random_range(1.0..2.0);
    let (sn, cs) = angle.sin_cos();
    let strokes: Vec<Stroke> = digit_strokes(d)
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| {
                    let x = x + rng.random_range(-0.05..0.05) - 0.5;
                    let y = y + rng.random_range(-0.05..0.05) - 0.5;
                    let (x, y) = (x + shear * y, y);
                    let (x, y) = (scale * (cs * x - sn * y), scale * (sn * x + cs * y));
                    (14.0 + 20.0 * x + tx, 14.0 + 20.0 * y + ty)
                })
                .collect()
        })
        .collect();
    let mut img = vec![0.0; 28 * 28];
    for r in 0..28 {
        for c in 0..28 {
            let p = (c as f64, r as f64);
            let dist =
                strokes.iter().flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1]))).fold(f64::INFINITY, f64::min);
            img[r * 28 + c] = (-(dist / width).powi(2)).exp();
        }
    }
    if rng.random_bool(spec.occlusion) {
        let (h, w) = (rng.random_range(7..13), rng.random_range(7..13));
        let (r0, c0) = (rng.random_range(4..28 - h - 2), rng.random_range(4..28 - w - 2));
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                img[r * 28 + c] = 0.0;
            }
        }
    }
    let noise = normal_vec(rng, 28 * 28);
    img.iter_mut().zip(noise).for_each(|(v, n)| *v = (*v + spec.pixel_noise * n).clamp(0.0, 1.0));
    img
}

#[derive(Clone, Copy)]
enum Phone {
    /// Voiced segment gliding between two (F1, F2, F3) formant sets.
    Vowel([f64; 3], [f64; 3]),
    /// Band-limited noise between two frequencies.
    Fricative(f64, f64),
    /// Short broadband burst.
    Burst,
    /// Low nasal murmur.
    Nasal,
}

fn digit_phones(d: usize) -> Vec<(Phone, f64)> {
    use Phone::*;
    const I: [f64; 3] = [400.0, 1900.0, 2550.0];
    const OU: [f64; 3] = [500.0, 900.0, 2400.0];
    const U: [f64; 3] = [320.0, 900.0, 2200.0];
    const AI0: [f64; 3] = [750.0, 1300.0, 2500.0];
    const AI1: [f64; 3] = [350.0, 2100.0, 2700.0];
    const R: [f64; 3] = [450.0, 1300.0, 1650.0];
    const II: [f64; 3] = [280.0, 2250.0, 2900.0];
    const AW: [f64; 3] = [570.0, 850.0, 2400.0];
    const EH: [f64; 3] = [550.0, 1800.0, 2500.0];
    const SCHWA: [f64; 3] = [500.0, 1500.0, 2500.0];
    const EI0: [f64; 3] = [500.0, 1900.0, 2500.0];
    const EI1: [f64; 3] = [350.0, 2200.0, 2800.0];
    const UH: [f64; 3] = [600.0, 1200.0, 2400.0];
    match d {
        0 => vec![(Fricative(2800.0, 3900.0), 0.12), (Vowel(I, R), 0.14), (Vowel(OU, U), 0.2)],
        1 => vec![(Vowel(U, UH), 0.1), (Vowel(UH, UH), 0.16), (Nasal, 0.12)],
        2 => vec![(Burst, 0.04), (Fricative(2000.0, 3500.0), 0.04), (Vowel(U, U), 0.28)],
        3 => vec![(Fricative(1500.0, 3900.0), 0.12), (Vowel(R, R), 0.06), (Vowel(II, II), 0.24)],
        4 => vec![(Fricative(1000.0, 3900.0), 0.12), (Vowel(AW, AW), 0.18), (Vowel(AW, R), 0.1)],
        5 => vec![(Fricative(1000.0, 3900.0), 0.1), (Vowel(AI0, AI1), 0.24), (Fricative(200.0, 1200.0), 0.08)],
        6 => vec![(Fricative(3000.0, 3950.0), 0.12), (Vowel(I, I), 0.1), (Burst, 0.04), (Fricative(3000.0, 3950.0), 0.12)],
        7 => vec![
            (Fricative(3000.0, 3950.0), 0.1),
            (Vowel(EH, EH), 0.12),
            (Fricative(200.0, 1200.0), 0.05),
            (Vowel(SCHWA, SCHWA), 0.08),
            (Nasal, 0.08),
        ],
        8 => vec![(Vowel(EI0, EI1), 0.26), (Burst, 0.05)],
        _ => vec![(Nasal, 0.08), (Vowel(AI0, AI1), 0.24), (Nasal, 0.1)],
    }
}

/// Speaker profile: pitch in Hz and formant scale.
fn speaker(s: usize) -> (f64, f64) {
    const PROFILES: [(f64, f64); 6] = [(110.0, 0.95), (125.0, 1.0), (180.0, 1.08), (210.0, 1.12), (95.0, 0.92), (160.0, 1.04)];
    PROFILES[s % PROFILES.len()]
}

fn resonance(f: f64, formants: &[f64; 3]) -> f64 {
    formants.iter().map(|&fc| 1.0 / (1.0 + ((f - fc) / (0.08 * fc + 60.0)).powi(2))).sum()
}

/// Synthesizes one spoken-digit clip at 8 kHz.
fn synth_digit_clip(d: usize, speaker_id: usize, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> WaveClip {
    const SR: f64 = 8000.0;
    let (pitch, fscale) = speaker(speaker_id);
    let pitch = pitch * rng.random_range(0.9..1.1);
    let fscale = fscale * rng.random_range(0.94..1.06);
    let tempo: f64 = rng.random_range(0.75..1.3);
    let mut out: Vec<f64> = vec![0.0; (rng.random_range(0.03..0.12) * SR) as usize];
    let mut phase = 0.0f64;
    for (phone, dur) in digit_phones(d) {
        let n = ((dur * tempo * SR) as usize).max(16);
        let env = |i: usize| {
            let t = i as f64 / n as f64;
            (PI * t).sin().powf(0.6)
        };
        match phone {
            Phone::Vowel(a, b) => {
                for i in 0..n {
                    let t = i as f64 / n as f64;
                    let formants = [0, 1, 2].map(|j| fscale * (a[j] + (b[j] - a[j]) * t));
                    let f0 = pitch * (1.0 + 0.08 * (1.0 - t));
                    phase += 2.0 * PI * f0 / SR;
                    let mut v = 0.0;
                    let mut h = 1;
                    while (h as f64) * f0 < 3900.0 {
                        v += resonance(h as f64 * f0, &formants) * (h as f64 * phase).sin() / (h as f64).sqrt();
                        h += 1;
                    }
                    out.push(0.12 * v * env(i));
                }
            }
            Phone::Fricative(lo, hi) => {
                let comps: Vec<(f64, f64)> = (0..24).map(|_| (rng.random_range(lo..hi), rng.random_range(0.0..2.0 * PI))).collect();
                for i in 0..n {
                    let t = i as f64 / SR;
                    let v: f64 = comps.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>() / 24f64.sqrt();
                    out.push(0.25 * v * env(i));
                }
            }
            Phone::Burst => {
                let noise = normal_vec(rng, n);
                out.extend(noise.iter().enumerate().map(|(i, v)| 0.3 * v * (-(i as f64) / (n as f64 * 0.3)).exp()));
            }
            Phone::Nasal => {
                for i in 0..n {
                    phase += 2.0 * PI * pitch / SR;
                    let v = (phase).sin() + 0.5 * (2.0 * phase).sin() + 0.2 * (3.0 * phase + 0.3).sin();
                    out.push(0.2 * v * env(i));
                }
            }
        }
    }
    out.extend(std::iter::repeat_n(0.0, (rng.random_range(0.03..0.12) * SR) as usize));

    let signal_power = out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64;
    let snr_db = rng.random_range(spec.snr_db.0..spec.snr_db.1);
    let noise_sd = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = normal_vec(rng, out.len());
    let peak = out.iter().zip(&noise).map(|(s, n)| (s + noise_sd * n).abs()).fold(0.0, f64::max).max(1e-9);
    let gain = rng.random_range(0.3..0.9) / peak;
    let samples = out.iter().zip(&noise).map(|(s, n)| gain * (s + noise_sd * n)).collect();
    WaveClip::new(samples, 8000).expect("synthesized clip is finite and non-empty")
}

/// Writes `images.idx3-ubyte`, `labels.idx1-ubyte` and `audio/*.wav` under
/// `dir`. Images are shuffled; clips follow the spoken-digit naming scheme.
pub fn generate_avmnist_corpus(dir: &Path, spec: &CorpusSpec, exec: Execution) -> Result<()> {
    std::fs::create_dir_all(dir.join(AUDIO_DIR))?;
    let mut rng = random::rng(spec.seed, streams::CORPUS);
    let mut labels: Vec<u8> = (0..10u8).flat_map(|d| std::iter::repeat_n(d, spec.per_class)).collect();
    labels.shuffle(&mut rng);
    let seeds: Vec<u64> = (0..labels.len() * 2).map(|_| rng.random()).collect();

    let images = par::map_range(exec, labels.len(), |i| {
        let mut r = random::rng(seeds[i], streams::CORPUS);
        render_digit(labels[i] as usize, spec, &mut r)
    });
    std::fs::write(dir.join(IMAGES_FILE), encode_idx_images(28, 28, &images))?;
    std::fs::write(dir.join(LABELS_FILE), encode_idx_labels(&labels))?;

    let clips: Vec<(usize, usize, usize)> = (0..10).flat_map(|d| (0..spec.per_class).map(move |k| (d, k % 6, k / 6))).collect();
    let written: Vec<Result<()>> = par::map_range(exec, clips.len(), |i| {
        let (d, s, take) = clips[i];
        let mut r = random::rng(seeds[labels.len() + i], streams::CORPUS);
        let clip = synth_digit_clip(d, s, spec, &mut r);
        write_wav(&dir.join(AUDIO_DIR).join(format!("{d}_speaker{s}_{take}.wav")), &clip)
    });
    written.into_iter().collect()
}

/// Digit encoded in a spoken-digit file name (`{digit}_...wav`).
fn clip_digit(path: &Path) -> Option<u8> {
    let name = path.file_name()?.to_str()?;
    let (digit, _) = name.split_once('_')?;
    digit.parse().ok().filter(|d: &u8| *d < 10)
}

/// Sorted `(digit, path)` pairs; within a digit, names compare by their
/// numeric runs so `take10` follows `take9`.
fn list_clips(audio_dir: &Path) -> Result<Vec<(u8, PathBuf)>> {
    let mut clips = Vec::new();
    for entry in std::fs::read_dir(audio_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("wav") {
            continue;
        }
        let d = clip_digit(&path).ok_or_else(|| Error::InvalidArgument(format!("cannot read a digit label from {}", path.display())))?;
        clips.push((d, path));
    }
    let key = |p: &Path| -> Vec<(String, u64)> {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        let mut parts = Vec::new();
        let mut text = String::new();
        let mut num = String::new();
        for ch in name.chars() {
            if ch.is_ascii_digit() {
                num.push(ch);
            } else {
                if !num.is_empty() {
                    parts.push((std::mem::take(&mut text), num.parse().unwrap_or(u64::MAX)));
                    num.clear();
                }
                text.push(ch);
            }
        }
        parts.push((text, num.parse().unwrap_or(0)));
        parts
    };
    clips.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| key(&a.1).cmp(&key(&b.1))));
    Ok(clips)
}

/// Summary of a prepared dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDataset {
    pub dir: PathBuf,
    pub train: MaskedDataset,
    pub validation: MaskedDataset,
    pub mfcc: Option<MfccConfig>,
}

pub const PREPARED_IMAGES: &str = "images.idx";
pub const PREPARED_LABELS: &str = "labels.idx";
pub const PREPARED_AUDIO: &str = "audio.smilf";
pub const TRAIN_MANIFEST: &str = "train.manifest";
pub const VALIDATION_MANIFEST: &str = "validation.manifest";
pub const PREPARE_INFO: &str = "prepare.txt";

/// Pairs images with audio by class, splits 70/30 (or `train_fraction`),
/// standardizes MFCC coefficients on the training split and writes the
/// result to `out`.
///
/// Audio comes either from `audio_dir` (WAV clips, run through MFCC) or from
/// a precomputed `features` file whose row `i` already belongs to image `i`.
#[allow(clippy::too_many_arguments)]
pub fn prepare_dataset(
    images: &Path,
    labels: &Path,
    audio_dir: Option<&Path>,
    features: Option<&Path>,
    out: &Path,
    mfcc: &MfccConfig,
    train_fraction: f64,
    split_seed: u64,
    exec: Execution,
) -> Result<PreparedDataset> {
    let (imgs, labs) = load_idx_images(images, labels)?;
    if (imgs.rows, imgs.cols) != (28, 28) {
        return Err(Error::InvalidArgument(format!("expected 28x28 images, found {}x{}", imgs.rows, imgs.cols)));
    }
    let schema = Schema::avmnist();
    let (maps, used_mfcc, paired) = match (features, audio_dir) {
        (Some(f), _) => {
            let maps = read_features(f)?;
            if maps.len() != imgs.images.len() {
                return Err(Error::InvalidArgument(format!("{} precomputed feature maps for {} images", maps.len(), imgs.images.len())));
            }
            (maps, None, true)
        }
        (None, Some(dir)) => {
            let clips = list_clips(dir)?;
            let waves: Vec<WaveClip> = par::map(exec, &clips, |(_, p)| read_wav(p)).into_iter().collect::<Result<_>>()?;
            let maps = mfcc_batch(&waves, mfcc, exec)?;
            let audio_labels: Vec<u8> = clips.iter().map(|c| c.0).collect();
            // Pair now so the feature file can be written in image order.
            let ds = pair_by_class(schema, imgs.images.clone(), &labs, maps.iter().map(|m| m.values().to_vec()).collect(), &audio_labels)?;
            let ordered = ds
                .samples
                .into_iter()
                .map(|s| MfccMap::new(20, 20, s.modality2.expect("paired sample has audio")))
                .collect::<Result<Vec<_>>>()?;
            (ordered, Some(mfcc.clone()), true)
        }
        (None, None) => return Err(Error::InvalidArgument("need an audio directory or a features file".into())),
    };
    debug_assert!(paired);
    if maps.iter().any(|m| (m.frames(), m.coeffs()) != (20, 20)) {
        return Err(Error::InvalidArgument("audio features must be 20x20".into()));
    }

    let samples: Vec<BimodalSample> = imgs
        .images
        .iter()
        .zip(&labs)
        .zip(&maps)
        .enumerate()
        .map(|(id, ((img, &l), m))| BimodalSample {
            id,
            modality1: img.clone(),
            modality2: Some(m.values().to_vec()),
            label: super::Label::Class(l as usize),
        })
        .collect();
    let ds = super::BimodalDataset::new(schema, samples)?;
    let (train, validation) = split_dataset(ds, train_fraction, split_seed)?;

    let train_maps: Vec<MfccMap> = train.samples.iter().map(|s| maps[s.id].clone()).collect();
    let standardizer = if train_maps.is_empty() {
        MfccStandardizer { mean: vec![0.0; 20], std: vec![1.0; 20] }
    } else {
        MfccStandardizer::fit(&train_maps)?
    };
    let standardized: Vec<MfccMap> = maps.iter().map(|m| standardizer.apply(m)).collect();

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(PREPARED_IMAGES), encode_idx_images(28, 28, &imgs.images))?;
    std::fs::write(out.join(PREPARED_LABELS), encode_idx_labels(&labs))?;
    write_features(&out.join(PREPARED_AUDIO), &standardized)?;
    write_manifest(&out.join(TRAIN_MANIFEST), &Manifest::of(&train))?;
    write_manifest(&out.join(VALIDATION_MANIFEST), &Manifest::of(&validation))?;
    let mut info = format!(
        "samples: {}\ntrain: {}\nvalidation: {}\ntrain_fraction: {train_fraction}\nsplit_seed: {split_seed}\n",
        labs.len(),
        train.len(),
        validation.len()
    );
    match &used_mfcc {
        Some(cfg) => {
            for (k, v) in cfg.describe() {
                info.push_str(&format!("{k}: {v}\n"));
            }
        }
        None => info.push_str(&format!("features: {}\n", features.map(|p| p.display().to_string()).unwrap_or_default())),
    }
    info.push_str(&format!("standardizer.mean: {}\nstandardizer.std: {}\n", join(&standardizer.mean), join(&standardizer.std)));
    std::fs::write(out.join(PREPARE_INFO), info)?;
    load_prepared(out).map(|p| PreparedDataset { mfcc: used_mfcc, ..p })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

/// Reads a directory written by [`prepare_dataset`].
pub fn load_prepared(dir: &Path) -> Result<PreparedDataset> {
    let (imgs, labs) = load_idx_images(&dir.join(PREPARED_IMAGES), &dir.join(PREPARED_LABELS))?;
    let maps = read_features(&dir.join(PREPARED_AUDIO))?;
    if maps.len() != labs.len() {
        return Err(Error::InvalidArgument(format!("{} feature maps for {} images", maps.len(), labs.len())));
    }
    let schema = Schema::avmnist();
    let build = |manifest: Manifest, split: Split| -> Result<MaskedDataset> {
        let mut samples = Vec::with_capacity(manifest.records.len());
        for r in manifest.records {
            let img = imgs.images.get(r.index).ok_or_else(|| Error::InvalidArgument(format!("manifest index {} out of range", r.index)))?;
            let sample = BimodalSample {
                id: r.index,
                modality1: img.clone(),
                modality2: r.has_audio.then(|| maps[r.index].values().to_vec()),
                label: super::Label::Class(labs[r.index] as usize),
            };
            if sample.label != r.label {
                return Err(Error::InvalidArgument(format!("manifest label mismatch at index {}", r.index)));
            }
            schema.validate(&sample)?;
            samples.push(sample);
        }
        Ok(MaskedDataset { schema, samples, eta: manifest.eta, seed: manifest.seed, split })
    };
    let train = build(read_manifest(&dir.join(TRAIN_MANIFEST))?, Split::Train)?;
    let validation = build(read_manifest(&dir.join(VALIDATION_MANIFEST))?, Split::Validation)?;
    Ok(PreparedDataset { dir: dir.to_path_buf(), train, validation, mfcc: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_names_sort_numerically_within_digit() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["3_a_10.wav", "3_a_9.wav", "1_b_0.wav", "notes.txt"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let clips = list_clips(dir.path()).unwrap();
        let names: Vec<String> = clips.iter().map(|c| c.1.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, vec!["1_b_0.wav", "3_a_9.wav", "3_a_10.wav"]);
    }

    #[test]
    fn rendered_digits_are_in_unit_range() {
        let spec = CorpusSpec::default();
        let mut rng = random::rng(1, 0);
        for d in 0..10 {
            let img = render_digit(d, &spec, &mut rng);
            assert_eq!(img.len(), 784);
            assert!(img.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn synthesized_clips_are_bounded() {
        let spec = CorpusSpec::default();
        let mut rng = random::rng(2, 0);
        for d in 0..10 {
            let clip = synth_digit_clip(d, d % 6, &spec, &mut rng);
            assert!(clip.samples().len() > 1000);
            assert!(clip.samples().iter().all(|s| s.abs() <= 1.0));
        }
    }
}
