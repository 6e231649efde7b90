//! The bilevel meta-learning trainer and the baselines.

use crate::autodiff::{Graph, Tensor};
use crate::dataset::{Batch, BimodalSample, MaskedDataset};
use crate::error::{Error, Result};
use crate::nn::{Architecture, Imputer, OmegaMean, Params, Reconstruction, RegOp, Regularization, SmilNet, Trainable};
use crate::par::Execution;
use crate::priors::{build_priors, EncodeFn, ModalityPriors, PriorMethod, PriorSpace};
use crate::random::{self, streams};
use crate::variational::{smil_loss, LossConfig, Noise, ObjectiveBreakdown};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Smil,
    Lower,
    Upper,
    Ae,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Smil => "smil",
            Method::Lower => "lower",
            Method::Upper => "upper",
            Method::Ae => "ae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Smil, Method::Lower, Method::Upper, Method::Ae].into_iter().find(|m| m.name() == s)
    }
}

/// Ablations of the full method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Full,
    /// φc emits the missing modality directly; no priors.
    NoKmeans,
    /// φr and the feature gate are removed.
    NoReg,
    /// The gate samples `r ~ N(0, I)`.
    FixedGaussian,
    /// Latents take their means; the KL terms are dropped.
    Deterministic,
}

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [Variant::NoKmeans, Variant::NoReg, Variant::FixedGaussian, Variant::Deterministic];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoKmeans => "no-kmeans",
            Variant::NoReg => "no-reg",
            Variant::FixedGaussian => "fixed-gaussian",
            Variant::Deterministic => "deterministic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        std::iter::once(Variant::Full).chain(Self::ABLATIONS).find(|v| v.name() == s).ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

/// Only first-order meta-gradients are implemented.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaMode {
    FirstOrder,
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub variant: Variant,
    pub eta: f64,
    pub seed: u64,
    /// Inner step size α.
    pub inner_lr: f64,
    /// Outer step size β.
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub iterations: usize,
    pub batch_m: usize,
    pub batch_f: usize,
    pub mc_samples: usize,
    pub kl_weight: f64,
    pub pos_weight: f64,
    pub num_priors: usize,
    pub prior_method: PriorMethod,
    pub prior_space: PriorSpace,
    /// Iterations between rebuilds of embedding-space priors.
    pub prior_refresh: usize,
    pub reg_op: RegOp,
    pub omega_mean: OmegaMean,
    pub reconstruction: bool,
    pub regularization: bool,
    pub optimizer: Optimizer,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub ae_iterations: usize,
    pub ignore_mask: bool,
    pub meta_mode: MetaMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Smil,
            variant: Variant::Full,
            eta: 0.2,
            seed: 0,
            inner_lr: 1e-3,
            outer_lr: 1e-3,
            inner_steps: 1,
            iterations: 15_000,
            batch_m: 64,
            batch_f: 64,
            mc_samples: 1,
            kl_weight: 1.0,
            pos_weight: 1.0,
            num_priors: 16,
            prior_method: PriorMethod::KMeans,
            prior_space: PriorSpace::Input,
            prior_refresh: 500,
            reg_op: RegOp::Mul,
            omega_mean: OmegaMean::Fixed,
            reconstruction: true,
            regularization: true,
            optimizer: Optimizer::Adam,
            clip_norm: Some(10.0),
            ae_iterations: 3000,
            ignore_mask: false,
            meta_mode: MetaMode::FirstOrder,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.inner_lr >= 0.0 && self.outer_lr >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.batch_m == 0 || self.batch_f == 0 || self.mc_samples == 0 {
            return bad("batch sizes and mc_samples must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        if self.num_priors == 0 || self.prior_refresh == 0 {
            return bad("num_priors and prior_refresh must be positive".into());
        }
        if self.kl_weight < 0.0 || !self.kl_weight.is_finite() {
            return bad("kl_weight must be finite and non-negative".into());
        }
        if self.method != Method::Smil && self.variant != Variant::Full {
            return bad(format!("variant {} applies only to smil", self.variant.name()));
        }
        Ok(())
    }

    /// Network layout implied by the method and variant.
    pub fn architecture(&self, schema: crate::dataset::Schema) -> Architecture {
        match self.method {
            Method::Lower => Architecture::image_only(schema),
            Method::Upper | Method::Ae => Architecture::fused(schema),
            Method::Smil => {
                let reconstruction = if !self.reconstruction {
                    Reconstruction::Off
                } else if self.variant == Variant::NoKmeans {
                    Reconstruction::Direct { space: self.prior_space }
                } else {
                    Reconstruction::Priors { k: self.num_priors, space: self.prior_space, omega_mean: self.omega_mean }
                };
                let regularization = match self.variant {
                    _ if !self.regularization => Regularization::Off,
                    Variant::NoReg => Regularization::Off,
                    Variant::FixedGaussian => Regularization::FixedGaussian,
                    _ => Regularization::Learned,
                };
                Architecture { schema, fused: true, reconstruction, regularization, reg_op: self.reg_op }
            }
        }
    }

    fn loss_config(&self) -> LossConfig {
        LossConfig {
            mc_samples: self.mc_samples,
            kl_weight: self.kl_weight,
            pos_weight: self.pos_weight,
            include_kl: self.variant != Variant::Deterministic,
        }
    }

    fn training_noise(&self) -> Noise {
        if self.variant == Variant::Deterministic {
            Noise::deterministic()
        } else {
            Noise::stream(random::rng(self.seed, streams::NOISE))
        }
    }
}

/// Adam (β₁ 0.9, β₂ 0.999, ε 1e-8) or plain SGD over parameter groups.
#[derive(Clone, Debug)]
pub struct OuterOptimizer {
    kind: Optimizer,
    lr: f64,
    t: i32,
    m: Vec<Vec<Tensor>>,
    v: Vec<Vec<Tensor>>,
}

impl OuterOptimizer {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(kind: Optimizer, lr: f64) -> Self {
        Self { kind, lr, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update of `groups` with `grads` (same layout).
    pub fn step(&mut self, groups: &mut [&mut Params], grads: &[Vec<Tensor>]) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in groups.iter_mut().zip(grads) {
                    p.axpy(-self.lr, g);
                }
            }
            Optimizer::Adam => {
                if self.m.is_empty() {
                    self.m = groups.iter().map(|p| p.zeros_like()).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                for (gi, p) in groups.iter_mut().enumerate() {
                    for (ti, t) in p.tensors_mut().enumerate() {
                        let g = grads[gi][ti].data();
                        let m = self.m[gi][ti].data_mut();
                        for (mi, gv) in m.iter_mut().zip(g) {
                            *mi = Self::BETA1 * *mi + (1.0 - Self::BETA1) * gv;
                        }
                        let v = self.v[gi][ti].data_mut();
                        for (vi, gv) in v.iter_mut().zip(g) {
                            *vi = Self::BETA2 * *vi + (1.0 - Self::BETA2) * gv * gv;
                        }
                        let (m, v) = (self.m[gi][ti].data(), self.v[gi][ti].data());
                        for ((w, mi), vi) in t.data_mut().iter_mut().zip(m).zip(v) {
                            *w -= self.lr * (mi / c1) / ((vi / c2).sqrt() + Self::EPS);
                        }
                    }
                }
            }
        }
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Vec<Tensor>], max_norm: Option<f64>) -> f64 {
    let norm = grads.iter().flatten().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if let Some(max) = max_norm {
        if norm > max {
            let s = max / norm;
            for t in grads.iter_mut().flatten() {
                t.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    norm
}

/// Draws batches without replacement, reshuffling after each pass.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(pool: Vec<usize>, rng: ChaCha8Rng) -> Self {
        let mut s = Self { order: pool.clone(), pool, pos: 0, rng };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    /// `min(n, pool size)` distinct indices.
    pub fn next(&mut self, n: usize) -> Vec<usize> {
        let n = n.min(self.pool.len());
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let i = self.order[self.pos];
            self.pos += 1;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }
}

/// Batch indices used by one iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationTrace {
    /// Inner-loop (modality-incomplete) batch.
    pub incomplete: Vec<usize>,
    /// Outer (modality-complete) batch.
    pub complete: Vec<usize>,
}

/// Side outputs of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Per-iteration `iter,nll,kl_omega,kl_r,total` lines are appended here.
    pub csv: Option<PathBuf>,
    pub exec: Execution,
    /// Keep the batch indices of every iteration.
    pub trace: bool,
}

/// Parameters and history of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: SmilNet,
    pub priors: Option<ModalityPriors>,
    pub history: Vec<ObjectiveBreakdown>,
    pub trace: Vec<IterationTrace>,
    /// Samples in the training split, modality-complete samples.
    pub train_count: usize,
    pub complete_count: usize,
    /// Final imputation error of the AE baseline on its training data.
    pub imputer_mse: Option<f64>,
}

struct CsvLog {
    file: Option<std::fs::File>,
}

impl CsvLog {
    fn open(path: Option<&PathBuf>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let mut f = std::fs::File::create(p)?;
                f.write_all(b"iter,nll,kl_omega,kl_r,total\n")?;
                Some(f)
            }
            None => None,
        };
        Ok(Self { file })
    }

    fn append(&mut self, iter: usize, b: &ObjectiveBreakdown) -> Result<()> {
        if let Some(f) = &mut self.file {
            // One write per line keeps lines whole under concurrent readers.
            let line = format!("{iter},{:e},{:e},{:e},{:e}\n", b.nll, b.kl_omega, b.kl_r, b.total);
            f.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

fn batch_of(data: &MaskedDataset, idx: &[usize], with_modality2: bool) -> Result<Batch> {
    let refs: Vec<&BimodalSample> = idx.iter().map(|&i| &data.samples[i]).collect();
    Batch::from_samples(&data.schema, &refs, with_modality2)
}

fn check_finite(history: &ObjectiveBreakdown, net: &SmilNet, iter: usize) -> Result<()> {
    if !history.total.is_finite() || !net.is_finite() {
        return Err(Error::InvalidArgument(format!("training diverged at iteration {iter}")));
    }
    Ok(())
}

/// Gradients of the bound groups, in [`SmilNet::groups`] order.
fn group_grads(net: &SmilNet, main: &Params, grads: &crate::autodiff::Gradients, b: &crate::nn::Bound) -> Vec<Vec<Tensor>> {
    let mut out = vec![main.gradients(grads, &b.main)];
    if let Some(r) = &net.recon {
        out.push(r.params.gradients(grads, &b.recon));
    }
    if let Some(r) = &net.reg {
        out.push(r.params.gradients(grads, &b.reg));
    }
    out
}

fn add_into(acc: &mut [Vec<Tensor>], other: &[Vec<Tensor>]) {
    for (a, o) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(o) {
            x.data_mut().iter_mut().zip(y.data()).for_each(|(p, q)| *p += q);
        }
    }
}

/// Working state of the bilevel trainer.
pub struct MetaTrainer<'a> {
    pub cfg: &'a TrainConfig,
    pub data: &'a MaskedDataset,
    pub net: SmilNet,
    pub priors: Option<ModalityPriors>,
    pub noise: Noise,
    optimizer: OuterOptimizer,
    loss: LossConfig,
    exec: Execution,
}

/// Result of one inner loop.
pub struct InnerResult {
    /// Adapted θ*.
    pub theta: Params,
    /// Loss gradient at the starting θ for every group, for the replay.
    pub first_grads: Vec<Vec<Tensor>>,
    pub first_loss: ObjectiveBreakdown,
}

impl<'a> MetaTrainer<'a> {
    pub fn new(cfg: &'a TrainConfig, data: &'a MaskedDataset, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let net = SmilNet::new(cfg.architecture(data.schema), cfg.seed)?;
        Ok(Self {
            cfg,
            data,
            net,
            priors: None,
            noise: cfg.training_noise(),
            optimizer: OuterOptimizer::new(cfg.optimizer, cfg.outer_lr),
            loss: cfg.loss_config(),
            exec,
        })
    }

    fn needs_priors(&self) -> bool {
        matches!(self.net.arch.reconstruction, Reconstruction::Priors { .. })
    }

    /// Builds (or rebuilds) the priors from the complete samples.
    pub fn refresh_priors(&mut self) -> Result<()> {
        if !self.needs_priors() {
            return Ok(());
        }
        let net = &self.net;
        let encoder = |xs: &[Vec<f64>]| net.audio_features(xs);
        let enc: Option<&EncodeFn> = if self.cfg.prior_space == PriorSpace::Embedding { Some(&encoder) } else { None };
        self.priors =
            Some(build_priors(self.data, self.cfg.num_priors, self.cfg.prior_method, self.cfg.prior_space, enc, self.cfg.seed, self.exec)?);
        Ok(())
    }

    /// `inner_steps` plain gradient steps on a copy of θ using a batch of
    /// modality-incomplete samples. φc and φr stay fixed.
    pub fn meta_train_inner(&mut self, idx: &[usize]) -> Result<InnerResult> {
        if idx.is_empty() {
            return Err(Error::InsufficientData("inner loop needs a non-empty batch".into()));
        }
        if idx.iter().any(|&i| self.data.samples[i].is_complete()) {
            return Err(Error::InvalidArgument("inner-loop batches must come from incomplete samples".into()));
        }
        let batch = batch_of(self.data, idx, false)?;
        let mut theta = self.net.main.params.clone();
        let mut first = None;
        for _ in 0..self.cfg.inner_steps {
            let mut g = Graph::new();
            let b = self.net.bind_with_main(&mut g, &theta, Trainable::ALL);
            let (vars, breakdown) = smil_loss(&mut g, &self.net, &b, &batch, self.priors.as_ref(), &self.loss, &mut self.noise)?;
            let grads = g.backward(vars.total)?;
            let gg = group_grads(&self.net, &theta, &grads, &b);
            theta.axpy(-self.cfg.inner_lr, &gg[0]);
            if first.is_none() {
                first = Some((gg, breakdown));
            }
        }
        let (first_grads, first_loss) = first.ok_or_else(|| Error::Config("inner_steps is 0".into()))?;
        Ok(InnerResult { theta, first_grads, first_loss })
    }

    /// Loss at θ* on a modality-complete batch, then one outer update of θ,
    /// φc and φr. `replay` (the inner-loss gradient at θ) is added to the
    /// outer gradient, which is the only path by which φc and the
    /// incomplete samples reach the update under first-order meta-gradients.
    pub fn meta_test_update(&mut self, theta_star: &Params, idx: &[usize], replay: Option<&[Vec<Tensor>]>) -> Result<ObjectiveBreakdown> {
        if idx.iter().any(|&i| !self.data.samples[i].is_complete()) {
            return Err(Error::MissingModality("outer batches must be modality-complete".into()));
        }
        let with_m2 = self.net.arch.fused;
        let batch = batch_of(self.data, idx, with_m2)?;
        let mut g = Graph::new();
        let b = self.net.bind_with_main(&mut g, theta_star, Trainable::ALL);
        let (vars, breakdown) = smil_loss(&mut g, &self.net, &b, &batch, self.priors.as_ref(), &self.loss, &mut self.noise)?;
        let grads = g.backward(vars.total)?;
        let mut gg = group_grads(&self.net, theta_star, &grads, &b);
        if let Some(r) = replay {
            add_into(&mut gg, r);
        }
        clip_global_norm(&mut gg, self.cfg.clip_norm);
        let mut groups: Vec<&mut Params> = self.net.groups_mut().collect();
        self.optimizer.step(&mut groups, &gg);
        Ok(breakdown)
    }
}

/// Algorithm-1 training: per iteration, an inner loop on incomplete samples
/// followed by an outer update on complete samples.
pub fn train_smil(data: &MaskedDataset, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    if cfg.method != Method::Smil {
        return Err(Error::Config(format!("train_smil called for method {}", cfg.method.name())));
    }
    let complete = data.complete_indices();
    let incomplete = data.incomplete_indices();
    if complete.is_empty() {
        return Err(Error::InsufficientData(format!("eta {} leaves no modality-complete training samples", data.eta)));
    }
    let mut t = MetaTrainer::new(cfg, data, opts.exec)?;
    t.refresh_priors()?;
    let mut m_sampler = BatchSampler::new(incomplete, random::rng(cfg.seed, streams::BATCHES));
    let mut f_sampler = BatchSampler::new(complete.clone(), random::rng(cfg.seed, streams::BATCHES_COMPLETE));
    let use_inner = cfg.inner_steps > 0 && m_sampler.pool_len() > 0 && t.net.arch.reconstruction != Reconstruction::Off;
    let mut csv = CsvLog::open(opts.csv.as_ref())?;
    let (mut history, mut trace) = (Vec::with_capacity(cfg.iterations), Vec::new());

    for iter in 0..cfg.iterations {
        if iter > 0 && cfg.prior_space == PriorSpace::Embedding && iter % cfg.prior_refresh == 0 {
            t.refresh_priors()?;
        }
        let m_idx = if use_inner { m_sampler.next(cfg.batch_m) } else { Vec::new() };
        let f_idx = f_sampler.next(cfg.batch_f);
        let (theta_star, replay, inner_loss) = if use_inner {
            let inner = t.meta_train_inner(&m_idx)?;
            (inner.theta, Some(inner.first_grads), Some(inner.first_loss))
        } else {
            (t.net.main.params.clone(), None, None)
        };
        let outer = t.meta_test_update(&theta_star, &f_idx, replay.as_deref())?;
        // ω is only sampled on incomplete samples, so its KL comes from the
        // inner batch; everything else is the outer objective.
        let kl_omega = inner_loss.map(|l| l.kl_omega).unwrap_or(0.0);
        let entry = ObjectiveBreakdown { kl_omega, total: outer.nll + cfg.kl_weight * (kl_omega + outer.kl_r), ..outer };
        check_finite(&entry, &t.net, iter)?;
        csv.append(iter, &entry)?;
        history.push(entry);
        if opts.trace {
            trace.push(IterationTrace { incomplete: m_idx, complete: f_idx });
        }
    }
    Ok(TrainOutcome {
        net: t.net,
        priors: t.priors,
        history,
        trace,
        train_count: data.len(),
        complete_count: complete.len(),
        imputer_mse: None,
    })
}

/// Supervised training of a network without auxiliary parts on `data`
/// (all samples), used by every baseline.
fn train_plain(
    data: &MaskedDataset,
    cfg: &TrainConfig,
    opts: &TrainOptions,
    arch: Architecture,
) -> Result<(SmilNet, Vec<ObjectiveBreakdown>, Vec<IterationTrace>)> {
    let mut net = SmilNet::new(arch, cfg.seed)?;
    let mut sampler = BatchSampler::new((0..data.len()).collect(), random::rng(cfg.seed, streams::BATCHES_COMPLETE));
    let mut opt = OuterOptimizer::new(cfg.optimizer, cfg.outer_lr);
    let loss = LossConfig { include_kl: false, ..cfg.loss_config() };
    let mut noise = Noise::deterministic();
    let mut csv = CsvLog::open(opts.csv.as_ref())?;
    let (mut history, mut trace) = (Vec::with_capacity(cfg.iterations), Vec::new());
    for iter in 0..cfg.iterations {
        let idx = sampler.next(cfg.batch_f);
        let batch = batch_of(data, &idx, arch.fused)?;
        let mut g = Graph::new();
        let b = net.bind(&mut g, Trainable::ALL);
        let (vars, breakdown) = smil_loss(&mut g, &net, &b, &batch, None, &loss, &mut noise)?;
        let grads = g.backward(vars.total)?;
        let mut gg = group_grads(&net, &net.main.params, &grads, &b);
        clip_global_norm(&mut gg, cfg.clip_norm);
        opt.step(&mut [&mut net.main.params], &gg);
        check_finite(&breakdown, &net, iter)?;
        csv.append(iter, &breakdown)?;
        history.push(breakdown);
        if opts.trace {
            trace.push(IterationTrace { incomplete: Vec::new(), complete: idx });
        }
    }
    Ok((net, history, trace))
}

/// Fits the image-to-modality-2 regressor on the complete samples with MSE.
pub fn train_imputer(data: &MaskedDataset, cfg: &TrainConfig) -> Result<(Imputer, f64)> {
    let complete = data.complete_indices();
    if complete.is_empty() {
        return Err(Error::InsufficientData("the imputer needs modality-complete samples".into()));
    }
    let mut imp = Imputer::new(data.schema, cfg.seed ^ 0x5eed)?;
    let mut sampler = BatchSampler::new(complete.clone(), random::rng(cfg.seed, streams::BATCHES));
    let mut opt = OuterOptimizer::new(cfg.optimizer, cfg.outer_lr);
    for _ in 0..cfg.ae_iterations {
        let idx = sampler.next(cfg.batch_f);
        let batch = batch_of(data, &idx, true)?;
        let target = batch.modality2.as_ref().expect("complete batch").data().to_vec();
        let mut g = Graph::new();
        let v = imp.params.bind(&mut g, true);
        let pred = imp.forward(&mut g, &v, &batch.modality1)?;
        let loss = g.mse(pred, &target)?;
        let grads = g.backward(loss)?;
        let mut gg = vec![imp.params.gradients(&grads, &v)];
        clip_global_norm(&mut gg, cfg.clip_norm);
        opt.step(&mut [&mut imp.params], &gg);
    }
    let mse = imputation_mse(&imp, data, &complete)?;
    Ok((imp, mse))
}

/// Mean squared error of the imputer over the listed samples.
pub fn imputation_mse(imp: &Imputer, data: &MaskedDataset, idx: &[usize]) -> Result<f64> {
    let batch = batch_of(data, idx, true)?;
    let pred = imp.predict(&batch.modality1)?;
    let target = batch.modality2.as_ref().expect("complete batch").data();
    let err: f64 = pred.iter().flatten().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(err / target.len() as f64)
}

/// Lower bound, upper bound or imputation baseline.
pub fn train_baseline(data: &MaskedDataset, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = cfg.architecture(data.schema);
    let complete_count = data.complete_count();
    let (train_data, imputer_mse) = match cfg.method {
        Method::Smil => return Err(Error::Config("smil is not a baseline".into())),
        Method::Lower => (data.clone(), None),
        Method::Upper => {
            if cfg.eta < 1.0 && !cfg.ignore_mask {
                return Err(Error::IncompleteData(format!("eta {} < 1 without ignore_mask", cfg.eta)));
            }
            if !data.is_fully_complete() {
                return Err(Error::IncompleteData(format!("{} samples lack modality 2", data.len() - complete_count)));
            }
            (data.clone(), None)
        }
        Method::Ae => {
            let (imp, mse) = train_imputer(data, cfg)?;
            let missing = data.incomplete_indices();
            let mut filled = data.clone();
            if !missing.is_empty() {
                let preds = imp.predict(&batch_of(data, &missing, false)?.modality1)?;
                for (i, p) in missing.into_iter().zip(preds) {
                    filled.samples[i].modality2 = Some(p);
                }
            }
            (filled, Some(mse))
        }
    };
    let (net, history, trace) = train_plain(&train_data, cfg, opts, arch)?;
    Ok(TrainOutcome { net, priors: None, history, trace, train_count: data.len(), complete_count, imputer_mse })
}

/// Dispatches on `cfg.method`.
pub fn train(data: &MaskedDataset, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    match cfg.method {
        Method::Smil => train_smil(data, cfg, opts),
        _ => train_baseline(data, cfg, opts),
    }
}
