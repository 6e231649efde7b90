use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smil_core::autodiff::{Graph, Tensor};
use smil_core::dataset::{
    mask_modality, split_dataset, synth_bimodal, Batch, BimodalDataset, BimodalSample, InputShape, Label, MaskedDataset, Schema, Split,
    SynthSpec,
};
use smil_core::nn::{Architecture, Audio, Params, SmilNet, Trainable};
use smil_core::par::Execution;
use smil_core::random::{self, streams};
use smil_core::train::{
    clip_global_norm, train, train_baseline, train_smil, BatchSampler, MetaTrainer, Method, Optimizer, OuterOptimizer, TrainConfig,
    TrainOptions, Variant,
};
use smil_core::variational::Noise;
use smil_core::Error;

fn synth(n: usize, eta: f64, seed: u64) -> MaskedDataset {
    let spec = SynthSpec::new(n, 3, 8, 6, 0.6, false, seed);
    let (train, _) = split_dataset(synth_bimodal(&spec).unwrap(), 1.0, seed).unwrap();
    mask_modality(&train, eta, seed).unwrap()
}

fn quick(method: Method, iterations: usize) -> TrainConfig {
    TrainConfig { method, iterations, batch_m: 16, batch_f: 16, num_priors: 4, ..Default::default() }
}

#[test]
fn zero_inner_step_returns_theta() {
    let data = synth(100, 0.3, 1);
    let cfg = TrainConfig { inner_lr: 0.0, inner_steps: 3, ..quick(Method::Smil, 1) };
    let mut t = MetaTrainer::new(&cfg, &data, Execution::Sequential).unwrap();
    t.refresh_priors().unwrap();
    let idx: Vec<usize> = data.incomplete_indices()[..8].to_vec();
    let inner = t.meta_train_inner(&idx).unwrap();
    assert_eq!(inner.theta, t.net.main.params);
}

#[test]
fn adapted_weights_never_alias_theta() {
    let data = synth(100, 0.3, 2);
    let cfg = TrainConfig { inner_lr: 0.5, ..quick(Method::Smil, 1) };
    let mut t = MetaTrainer::new(&cfg, &data, Execution::Sequential).unwrap();
    t.refresh_priors().unwrap();
    let before = t.net.clone();
    let idx: Vec<usize> = data.incomplete_indices()[..8].to_vec();
    let inner = t.meta_train_inner(&idx).unwrap();
    assert_ne!(inner.theta, before.main.params);
    assert_eq!(t.net, before);
}

#[test]
fn two_inner_steps_equal_two_single_steps() {
    let data = synth(100, 0.3, 3);
    let idx: Vec<usize> = data.incomplete_indices()[..10].to_vec();
    let cfg2 = TrainConfig { inner_lr: 0.05, inner_steps: 2, ..quick(Method::Smil, 1) };
    let mut a = MetaTrainer::new(&cfg2, &data, Execution::Sequential).unwrap();
    a.refresh_priors().unwrap();
    let two = a.meta_train_inner(&idx).unwrap().theta;

    let cfg1 = TrainConfig { inner_steps: 1, ..cfg2.clone() };
    let mut b = MetaTrainer::new(&cfg1, &data, Execution::Sequential).unwrap();
    b.refresh_priors().unwrap();
    let first = b.meta_train_inner(&idx).unwrap().theta;
    b.net.main.params = first;
    let second = b.meta_train_inner(&idx).unwrap().theta;
    for (x, y) in two.iter().zip(second.iter()) {
        for (p, q) in x.1.data().iter().zip(y.1.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_batch_barely_moves_theta() {
    let mut data = synth(100, 0.3, 4);
    let idx: Vec<usize> = data.incomplete_indices()[..8].to_vec();
    for &i in &idx {
        data.samples[i].label = Label::Class(1);
    }
    let cfg = TrainConfig { inner_lr: 1.0, ..quick(Method::Smil, 1) };
    let mut t = MetaTrainer::new(&cfg, &data, Execution::Sequential).unwrap();
    t.refresh_priors().unwrap();
    let out_bias = (0..t.net.main.params.len()).find(|&i| t.net.main.params.name(i) == "head.out.bias").unwrap();
    t.net.main.params.get_mut(out_bias).data_mut()[1] = 60.0;
    let inner = t.meta_train_inner(&idx).unwrap();
    let norm: f64 = inner.first_grads[0].iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
    assert!(norm < 1e-8, "gradient norm {norm:e}");
    for (x, y) in inner.theta.iter().zip(t.net.main.params.iter()) {
        assert!(x.1.data().iter().zip(y.1.data()).all(|(p, q)| (p - q).abs() < 1e-8));
    }
}

#[test]
fn phase_discipline_is_enforced() {
    let data = synth(100, 0.3, 5);
    let cfg = quick(Method::Smil, 1);
    let mut t = MetaTrainer::new(&cfg, &data, Execution::Sequential).unwrap();
    t.refresh_priors().unwrap();
    let complete = data.complete_indices();
    let incomplete = data.incomplete_indices();
    assert!(t.meta_train_inner(&complete[..4]).is_err());
    assert!(t.meta_train_inner(&[]).is_err());
    let theta = t.net.main.params.clone();
    assert!(matches!(t.meta_test_update(&theta, &incomplete[..4], None), Err(Error::MissingModality(_))));

    let opts = TrainOptions { trace: true, ..Default::default() };
    let out = train_smil(&data, &quick(Method::Smil, 30), &opts).unwrap();
    assert_eq!(out.trace.len(), 30);
    for it in &out.trace {
        assert_eq!(it.incomplete.len(), 16);
        assert!(it.incomplete.iter().all(|&i| !data.samples[i].is_complete()));
        assert!(it.complete.iter().all(|&i| data.samples[i].is_complete()));
    }
}

#[test]
fn zero_outer_rate_leaves_parameters_unchanged() {
    let data = synth(100, 0.3, 6);
    for optimizer in [Optimizer::Adam, Optimizer::Sgd] {
        let cfg = TrainConfig { outer_lr: 0.0, optimizer, ..quick(Method::Smil, 5) };
        let out = train_smil(&data, &cfg, &TrainOptions::default()).unwrap();
        assert_eq!(out.net, SmilNet::new(cfg.architecture(data.schema), cfg.seed).unwrap());
        assert_eq!(out.history.len(), 5);
    }
}

#[test]
fn reduced_configuration_is_plain_sgd_on_the_fused_classifier() {
    let data = synth(200, 0.4, 7);
    let cfg = TrainConfig {
        reconstruction: false,
        regularization: false,
        kl_weight: 0.0,
        inner_steps: 0,
        optimizer: Optimizer::Sgd,
        clip_norm: None,
        outer_lr: 0.05,
        ..quick(Method::Smil, 50)
    };
    let out = train_smil(&data, &cfg, &TrainOptions { trace: true, ..Default::default() }).unwrap();

    let mut params = SmilNet::new(Architecture::fused(data.schema), cfg.seed).unwrap();
    assert_eq!(params.arch, out.net.arch);
    for (it, step) in out.trace.iter().zip(&out.history) {
        assert!(it.incomplete.is_empty());
        let samples: Vec<&BimodalSample> = it.complete.iter().map(|&i| &data.samples[i]).collect();
        let batch = Batch::from_samples(&data.schema, &samples, true).unwrap();
        let classes: Vec<usize> = samples
            .iter()
            .map(|s| match s.label {
                Label::Class(c) => c,
                _ => unreachable!(),
            })
            .collect();
        let mut g = Graph::new();
        let b = params.bind(&mut g, Trainable::ALL);
        let fwd = params
            .forward(&mut g, &b, &batch.modality1, Audio::Present(batch.modality2.as_ref().unwrap()), None, &mut Noise::deterministic())
            .unwrap();
        let loss = g.softmax_cross_entropy(fwd.logits, &classes).unwrap();
        assert!((g.value(loss).item() - step.total).abs() < 1e-12);
        let grads = g.backward(loss).unwrap();
        let delta: Vec<Tensor> = params.main.params.gradients(&grads, &b.main);
        params.main.params.axpy(-cfg.outer_lr, &delta);
    }
    for (x, y) in params.main.params.iter().zip(out.net.main.params.iter()) {
        for (p, q) in x.1.data().iter().zip(y.1.data()) {
            assert!((p - q).abs() < 1e-12, "{}: {p} vs {q}", x.0);
        }
    }
}

#[test]
fn small_outer_step_descends_on_a_fixed_batch() {
    let data = synth(200, 0.3, 8);
    let cfg = TrainConfig { outer_lr: 1e-4, optimizer: Optimizer::Sgd, clip_norm: None, ..quick(Method::Smil, 1) };
    let mut t = MetaTrainer::new(&cfg, &data, Execution::Sequential).unwrap();
    t.refresh_priors().unwrap();
    let m: Vec<usize> = data.incomplete_indices()[..16].to_vec();
    let f: Vec<usize> = data.complete_indices()[..16].to_vec();
    let mut recorded = None;
    let mut losses = Vec::new();
    for _ in 0..2 {
        t.noise = match &recorded {
            None => Noise::stream(random::rng(3, streams::NOISE)),
            Some(d) => Noise::replay(Vec::clone(d)),
        };
        let inner = t.meta_train_inner(&m).unwrap();
        let outer = t.meta_test_update(&inner.theta, &f, Some(&inner.first_grads)).unwrap();
        losses.push(inner.first_loss.total + outer.total);
        if recorded.is_none() {
            recorded = Some(std::mem::replace(&mut t.noise, Noise::deterministic()).into_recorded());
        }
    }
    assert!(losses[1] <= losses[0], "{losses:?}");
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn synthetic_training_lowers_the_loss() {
    let data = synth(400, 0.3, 9);
    let out = train_smil(&data, &quick(Method::Smil, 500), &TrainOptions::default()).unwrap();
    let totals: Vec<f64> = out.history.iter().map(|h| h.total).collect();
    assert!(totals.iter().all(|v| v.is_finite()));
    assert!(mean(&totals[450..]) < mean(&totals[..50]), "{} vs {}", mean(&totals[450..]), mean(&totals[..50]));
    assert!(out.net.is_finite());
}

#[test]
fn same_seed_gives_identical_runs() {
    let data = synth(150, 0.3, 10);
    let cfg = quick(Method::Smil, 40);
    let a = train_smil(&data, &cfg, &TrainOptions::default()).unwrap();
    let b = train_smil(&data, &cfg, &TrainOptions { exec: Execution::Sequential, ..Default::default() }).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.net, b.net);
    assert_eq!(a.priors, b.priors);
    let c = train_smil(&data, &TrainConfig { seed: 1, ..cfg }, &TrainOptions::default()).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn deterministic_variant_logs_no_divergence() {
    let data = synth(150, 0.3, 11);
    let cfg = TrainConfig { variant: Variant::Deterministic, ..quick(Method::Smil, 10) };
    let out = train_smil(&data, &cfg, &TrainOptions::default()).unwrap();
    assert!(out.history.iter().all(|h| h.kl_omega == 0.0 && h.kl_r == 0.0 && h.total == h.nll));
    let full = train_smil(&data, &quick(Method::Smil, 10), &TrainOptions::default()).unwrap();
    assert!(full.history.iter().all(|h| h.kl_omega > 0.0 && h.kl_r > 0.0));
}

#[test]
fn variants_reshape_the_auxiliary_networks() {
    let schema = synth(20, 1.0, 0).schema;
    let arch = |v: Variant| TrainConfig { variant: v, ..quick(Method::Smil, 1) }.architecture(schema);
    let net = |v| SmilNet::new(arch(v), 0).unwrap();
    assert!(net(Variant::NoReg).reg.is_none());
    assert!(net(Variant::FixedGaussian).reg.is_none());
    let direct = net(Variant::NoKmeans);
    let last = direct.recon.as_ref().unwrap().params.len() - 1;
    assert_eq!(direct.recon.as_ref().unwrap().params.get(last).len(), schema.modality2.len());
    assert_eq!(Variant::parse("no-such").unwrap_err().code(), "unknown-ablation-variant");
    for v in Variant::ABLATIONS {
        assert_eq!(Variant::parse(v.name()).unwrap(), v);
    }
}

#[test]
fn history_is_written_as_csv() {
    let data = synth(100, 0.3, 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let out = train(&data, &quick(Method::Smil, 7), &TrainOptions { csv: Some(path.clone()), ..Default::default() }).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,nll,kl_omega,kl_r,total");
    assert_eq!(lines.len(), 8);
    let last: Vec<f64> = lines[7].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 6.0);
    assert_eq!(last[4], out.history[6].total);
}

#[test]
fn empty_complete_set_is_an_error() {
    let data = synth(100, 0.0, 13);
    assert!(matches!(train_smil(&data, &quick(Method::Smil, 1), &TrainOptions::default()), Err(Error::InsufficientData(_))));
}

#[test]
fn lower_bound_never_reads_modality_two() {
    let data = synth(150, 0.3, 14);
    let mut shuffled = data.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in shuffled.samples.iter_mut() {
        if let Some(v) = &mut s.modality2 {
            v.iter_mut().for_each(|x| *x = rng.random_range(-5.0..5.0));
        }
    }
    let cfg = quick(Method::Lower, 30);
    let a = train_baseline(&data, &cfg, &TrainOptions::default()).unwrap();
    let b = train_baseline(&shuffled, &cfg, &TrainOptions::default()).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.net, b.net);
    assert!(!a.net.arch.fused);
}

#[test]
fn upper_bound_requires_complete_data() {
    let masked = synth(100, 0.2, 15);
    let err = train_baseline(&masked, &quick(Method::Upper, 2), &TrainOptions::default()).unwrap_err();
    assert_eq!(err.code(), "incomplete-data");
    let ignore = TrainConfig { ignore_mask: true, ..quick(Method::Upper, 2) };
    assert!(train_baseline(&masked, &ignore, &TrainOptions::default()).is_err());
    let full = synth(100, 1.0, 15);
    let cfg = TrainConfig { eta: 1.0, ..quick(Method::Upper, 2) };
    assert!(train_baseline(&full, &cfg, &TrainOptions::default()).is_ok());
}

/// Modality 2 is a fixed linear map of modality 1.
fn linear_pairs(n: usize) -> MaskedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a: Vec<f64> = (0..12).map(|_| rng.random_range(-0.5..0.5)).collect();
    let samples = (0..n)
        .map(|id| {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|r| (0..4).map(|c| a[r * 4 + c] * x[c]).sum()).collect();
            let label = Label::Class(usize::from(y[0] > 0.0));
            BimodalSample { id, modality1: x, modality2: Some(y), label }
        })
        .collect();
    let schema = Schema { modality1: InputShape::Vector(4), modality2: InputShape::Vector(3), num_classes: 2, multi_label: false };
    let data = MaskedDataset::unmasked(BimodalDataset::new(schema, samples).unwrap(), Split::Train);
    mask_modality(&data, 0.5, 0).unwrap()
}

#[test]
fn imputer_learns_a_realizable_map() {
    let data = linear_pairs(400);
    let cfg = TrainConfig { ae_iterations: 3000, ..quick(Method::Ae, 5) };
    let out = train_baseline(&data, &cfg, &TrainOptions::default()).unwrap();
    let mse = out.imputer_mse.unwrap();
    assert!(mse < 1e-3, "imputation mse {mse:e}");
}

#[test]
fn adam_first_step_moves_by_the_rate() {
    let mut p = Params::new();
    p.push("w", Tensor::from_vec(vec![2.0, -3.0]));
    let mut opt = OuterOptimizer::new(Optimizer::Adam, 0.1);
    opt.step(&mut [&mut p], &[vec![Tensor::from_vec(vec![0.5, -0.1])]]);
    assert!((p.get(0).data()[0] - 1.9).abs() < 1e-6);
    assert!((p.get(0).data()[1] + 2.9).abs() < 1e-6);

    let mut sgd = OuterOptimizer::new(Optimizer::Sgd, 0.1);
    sgd.step(&mut [&mut p], &[vec![Tensor::from_vec(vec![1.0, 1.0])]]);
    assert!((p.get(0).data()[0] - 1.8).abs() < 1e-6);
}

#[test]
fn clipping_bounds_the_global_norm() {
    let mut g = vec![vec![Tensor::from_vec(vec![3.0])], vec![Tensor::from_vec(vec![4.0])]];
    assert_eq!(clip_global_norm(&mut g, Some(1.0)), 5.0);
    assert!((g[0][0].data()[0] - 0.6).abs() < 1e-15 && (g[1][0].data()[0] - 0.8).abs() < 1e-15);
    let mut h = g.clone();
    clip_global_norm(&mut h, Some(10.0));
    assert_eq!(g, h);
}

#[test]
fn sampler_draws_without_replacement_per_pass() {
    let mut s = BatchSampler::new((10..30).collect(), random::rng(0, streams::BATCHES));
    let mut seen: Vec<usize> = (0..4).flat_map(|_| s.next(5)).collect();
    seen.sort();
    assert_eq!(seen, (10..30).collect::<Vec<_>>());
    assert_eq!(s.next(100).len(), 20);
}
