use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smil_core::signal::{dct2, hann, mel_filterbank, mfcc, MfccConfig, MfccExtractor, MfccMap, MfccStandardizer, WaveClip};
use std::f64::consts::PI;

fn sine(freq: f64, phase: f64, len: usize, amp: f64) -> WaveClip {
    let samples = (0..len).map(|i| amp * (2.0 * PI * freq * i as f64 / 8000.0 + phase).sin()).collect();
    WaveClip::new(samples, 8000).unwrap()
}

/// Power spectrum by the textbook O(n²) DFT.
fn direct_power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    (0..fft_size / 2 + 1)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, x) in frame.iter().enumerate() {
                let a = -2.0 * PI * k as f64 * n as f64 / fft_size as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

#[test]
fn two_filter_bank_overlaps_in_one_bin() {
    let fb = mel_filterbank(2, 8, 8000, 0.0, 4000.0).unwrap();
    let overlap: Vec<usize> = (0..fb.bins).filter(|&k| fb.row(0)[k] > 0.0 && fb.row(1)[k] > 0.0).collect();
    assert_eq!(overlap.len(), 1, "{fb:?}");
    // The shared bin sits between the two peaks.
    let bin_hz = overlap[0] as f64 * 1000.0;
    assert!(fb.edges[0].1 < bin_hz && bin_hz < fb.edges[1].1);
    for m in 0..2 {
        assert!(fb.row(m).iter().all(|&w| w >= 0.0));
        assert!(fb.row(m).iter().sum::<f64>() > 0.0);
    }
}

#[test]
fn filter_centers_increase() {
    let fb = mel_filterbank(26, 512, 8000, 0.0, 4000.0).unwrap();
    let c = fb.centers();
    assert!(c.windows(2).all(|w| w[0] < w[1]));
    assert!(fb.weights.iter().all(|&w| w >= 0.0));
}

#[test]
fn invalid_frequency_ranges_are_rejected() {
    assert!(mel_filterbank(26, 512, 8000, 100.0, 100.0).is_err());
    assert!(mel_filterbank(26, 512, 8000, -1.0, 100.0).is_err());
    assert!(mel_filterbank(26, 512, 8000, 0.0, 4001.0).is_err());
    assert!(mel_filterbank(1, 512, 8000, 0.0, 4000.0).is_err());
}

#[test]
fn sine_at_440_peaks_in_the_filter_covering_440() {
    let fb = mel_filterbank(26, 512, 8000, 0.0, 4000.0).unwrap();
    let clip = sine(440.0, 0.3, 400, 0.8);
    let window = hann(400);
    let frame: Vec<f64> = clip.samples().iter().zip(&window).map(|(s, w)| s * w).collect();
    let power = direct_power_spectrum(&frame, 512);
    let energies = fb.apply(&power);
    let responding = (0..26).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).unwrap();
    let bin = (440.0_f64 / (8000.0 / 512.0)).round() as usize;
    let covering = (0..26).max_by(|&a, &b| fb.row(a)[bin].total_cmp(&fb.row(b)[bin])).unwrap();
    assert_eq!(responding, covering);
}

#[test]
fn log_mel_energies_match_direct_dft() {
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let clip = WaveClip::new((0..4000).map(|_| rng.random_range(-0.5..0.5)).collect(), 8000).unwrap();
    let energies = ex.log_mel_energies(&clip).unwrap();
    let (signal, hop) = ex.normalize_length(clip.samples());
    let window = hann(cfg.frame_len);
    for f in [0usize, 7, 19] {
        let frame: Vec<f64> = signal[f * hop..f * hop + cfg.frame_len].iter().zip(&window).map(|(s, w)| s * w).collect();
        let direct: Vec<f64> =
            ex.filterbank().apply(&direct_power_spectrum(&frame, cfg.fft_size)).into_iter().map(|e| e.max(cfg.log_floor).ln()).collect();
        for (a, b) in energies[f].iter().zip(&direct) {
            assert!((a - b).abs() < 1e-8, "frame {f}: {a} vs {b}");
        }
    }
}

#[test]
fn silent_clip_puts_everything_in_coefficient_zero() {
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(cfg.clone()).unwrap();
    let clip = WaveClip::new(vec![0.0; 3000], 8000).unwrap();
    for frame in ex.log_mel_energies(&clip).unwrap() {
        assert!(frame.iter().all(|&e| e == 1e-10f64.ln()));
    }
    let map = ex.mfcc(&clip).unwrap();
    assert_eq!((map.frames(), map.coeffs()), (20, 20));
    for f in 0..20 {
        assert!((map.get(f, 0) - 26f64.sqrt() * 1e-10f64.ln()).abs() < 1e-9);
        for c in 1..20 {
            assert!(map.get(f, c).abs() < 1e-9, "coefficient {c} = {}", map.get(f, c));
        }
    }
}

#[test]
fn output_is_twenty_by_twenty_for_any_length() {
    let cfg = MfccConfig::default();
    for len in [1usize, 50, 399, 400, 401, 2000, 7000, 20000] {
        let map = mfcc(&sine(300.0, 0.0, len, 0.5), &cfg).unwrap();
        assert_eq!((map.frames(), map.coeffs()), (20, 20));
        assert!(map.values().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn rejects_non_8khz_audio() {
    let clip = WaveClip::new(vec![0.1; 1000], 16000).unwrap();
    assert!(mfcc(&clip, &MfccConfig::default()).is_err());
}

#[test]
fn different_pitches_are_further_apart_than_different_phases() {
    let cfg = MfccConfig::default();
    let a = mfcc(&sine(440.0, 0.0, 4000, 0.5), &cfg).unwrap();
    let b = mfcc(&sine(440.0, 1.3, 4000, 0.5), &cfg).unwrap();
    let c = mfcc(&sine(1200.0, 0.0, 4000, 0.5), &cfg).unwrap();
    assert!(a.distance(&c) > a.distance(&b), "{} vs {}", a.distance(&c), a.distance(&b));

    // Spot-check the energy peak moves with the tone.
    let ex = MfccExtractor::new(cfg).unwrap();
    let peak = |clip: &WaveClip| {
        let e = &ex.log_mel_energies(clip).unwrap()[10];
        (0..e.len()).max_by(|&x, &y| e[x].total_cmp(&e[y])).unwrap()
    };
    assert!(peak(&sine(1200.0, 0.0, 4000, 0.5)) > peak(&sine(440.0, 0.0, 4000, 0.5)));
}

#[test]
fn extraction_is_deterministic() {
    let cfg = MfccConfig::default();
    let clip = sine(523.0, 0.2, 3500, 0.7);
    assert_eq!(mfcc(&clip, &cfg).unwrap(), mfcc(&clip, &cfg).unwrap());
}

#[test]
fn doubling_amplitude_only_moves_coefficient_zero() {
    let cfg = MfccConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let clip = WaveClip::new((0..5000).map(|_| rng.random_range(-0.3..0.3)).collect(), 8000).unwrap();
    let a = mfcc(&clip, &cfg).unwrap();
    let b = mfcc(&clip.scaled(2.0).unwrap(), &cfg).unwrap();
    let shift = 26f64.sqrt() * 4f64.ln();
    for f in 0..20 {
        assert!((b.get(f, 0) - a.get(f, 0) - shift).abs() < 1e-9);
        for c in 1..20 {
            assert!((b.get(f, c) - a.get(f, c)).abs() < 1e-9);
        }
    }
}

#[test]
fn standardized_corpus_has_zero_mean_unit_std() {
    let cfg = MfccConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let maps: Vec<MfccMap> = (0..30)
        .map(|_| {
            let f = rng.random_range(200.0..2000.0);
            let len = rng.random_range(1500..6000);
            mfcc(&sine(f, rng.random_range(0.0..6.0), len, rng.random_range(0.1..0.9)), &cfg).unwrap()
        })
        .collect();
    let st = MfccStandardizer::fit(&maps).unwrap();
    let z: Vec<MfccMap> = maps.iter().map(|m| st.apply(m)).collect();
    for c in 0..20 {
        let vals: Vec<f64> = z.iter().flat_map(|m| (0..20).map(move |f| m.get(f, c))).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "coefficient {c}: mean {mean}");
        assert!((sd - 1.0).abs() < 1e-9, "coefficient {c}: sd {sd}");
    }
}

#[test]
fn dct_of_constant_is_concentrated() {
    let out = dct2(&[2.5; 26], 20);
    assert!((out[0] - 2.5 * 26f64.sqrt()).abs() < 1e-12);
    assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
}
