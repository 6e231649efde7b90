//! Parallel and sequential execution of the data-parallel stages.
//! Build with `--no-default-features` to measure the rayon-free fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smil_core::dataset::{split_dataset, synth_bimodal, SynthSpec};
use smil_core::eval::{evaluate, EvalMode, Pattern};
use smil_core::nn::{Architecture, SmilNet};
use smil_core::par::Execution;
use smil_core::priors::{build_priors, kmeans, PriorMethod, PriorSpace};
use smil_core::signal::{mfcc_batch, MfccConfig, WaveClip, WAV_SAMPLE_RATE};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_mfcc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let clips: Vec<WaveClip> =
        (0..64).map(|_| WaveClip::new((0..8000).map(|_| rng.random_range(-0.5..0.5)).collect(), WAV_SAMPLE_RATE).unwrap()).collect();
    let cfg = MfccConfig::default();
    let mut group = c.benchmark_group("mfcc_batch_64");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| mfcc_batch(black_box(&clips), &cfg, exec).unwrap()));
    }
    group.finish();
}

fn bench_kmeans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<Vec<f64>> = (0..1000).map(|_| (0..400).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut group = c.benchmark_group("kmeans_1000x400_k16");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| kmeans(black_box(&points), 16, 20, 0, exec).unwrap()));
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let spec = SynthSpec::new(2000, 10, 64, 64, 1.0, false, 2);
    let (train, val) = split_dataset(synth_bimodal(&spec).unwrap(), 0.5, 2).unwrap();
    let priors = build_priors(&train, 16, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Parallel).unwrap();
    let net = SmilNet::new(Architecture::smil(spec.schema(), 16), 0).unwrap();
    let mut group = c.benchmark_group("evaluate_image_only_1000");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(&net, Some(&priors), black_box(&val), Pattern::ImageOnly, EvalMode::Stochastic(4), 0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mfcc, bench_kmeans, bench_evaluate);
criterion_main!(benches);
