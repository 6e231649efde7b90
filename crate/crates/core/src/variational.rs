//! Reparameterized sampling, diagonal-Gaussian KL and the Monte-Carlo
//! training objective.

use crate::autodiff::{Graph, Tensor, Var};
use crate::dataset::{Batch, BatchLabels};
use crate::error::{Error, Result};
use crate::nn::{Audio, Bound, SmilNet};
use crate::priors::ModalityPriors;
use crate::random::normal_vec;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::InvalidArgument(format!("gaussian with {} means and {} deviations", mean.len(), std.len())));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("gaussian needs finite means and positive deviations".into()));
        }
        Ok(Self { mean, std })
    }

    /// `N(mean, I)` in `dim` dimensions.
    pub fn standard(dim: usize, mean: f64) -> Self {
        Self { mean: vec![mean; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `KL(q || p)` for diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gauss(q: &GaussianSpec, p: &GaussianSpec) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::InvalidArgument(format!("KL between {} and {} dimensions", q.dim(), p.dim())));
    }
    Ok((0..q.dim())
        .map(|i| {
            let (qm, qs, pm, ps) = (q.mean[i], q.std[i], p.mean[i], p.std[i]);
            (ps / qs).ln() + (qs * qs + (qm - pm) * (qm - pm)) / (2.0 * ps * ps) - 0.5
        })
        .sum())
}

/// `mean + std * eps` with `eps ~ N(0, I)`; returns the draw and `eps`.
pub fn sample_reparam(spec: &GaussianSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let eps = normal_vec(rng, spec.dim());
    let draw = spec.mean.iter().zip(&spec.std).zip(&eps).map(|((m, s), e)| m + s * e).collect();
    (draw, eps)
}

/// Source of the unit-normal draws behind every stochastic latent.
///
/// Every draw is recorded, so a run can be replayed exactly by feeding the
/// record back through [`Noise::replay`].
#[derive(Debug)]
pub struct Noise {
    source: Source,
    recorded: Vec<Tensor>,
}

#[derive(Debug)]
enum Source {
    /// Latents take their means.
    Deterministic,
    Stream(Box<ChaCha8Rng>),
    Replay(VecDeque<Tensor>),
}

impl Noise {
    pub fn deterministic() -> Self {
        Self { source: Source::Deterministic, recorded: Vec::new() }
    }

    pub fn stream(rng: ChaCha8Rng) -> Self {
        Self { source: Source::Stream(Box::new(rng)), recorded: Vec::new() }
    }

    pub fn replay(draws: Vec<Tensor>) -> Self {
        Self { source: Source::Replay(draws.into()), recorded: Vec::new() }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.source, Source::Deterministic)
    }

    /// Next `eps` of the given shape, or `None` in deterministic mode.
    pub fn draw(&mut self, shape: &[usize]) -> Result<Option<Tensor>> {
        let eps = match &mut self.source {
            Source::Deterministic => return Ok(None),
            Source::Stream(rng) => Tensor::new(shape.to_vec(), normal_vec(rng, shape.iter().product()))?,
            Source::Replay(queue) => {
                let t = queue.pop_front().ok_or_else(|| Error::InvalidArgument("replayed noise exhausted".into()))?;
                if t.shape() != shape {
                    return Err(Error::InvalidArgument(format!("replayed noise has shape {:?}, expected {shape:?}", t.shape())));
                }
                t
            }
        };
        self.recorded.push(eps.clone());
        Ok(Some(eps))
    }

    pub fn recorded(&self) -> &[Tensor] {
        &self.recorded
    }

    pub fn into_recorded(self) -> Vec<Tensor> {
        self.recorded
    }
}

/// Graph form of [`sample_reparam`]: `mean + std ⊙ eps` with `eps` a
/// constant, so gradients reach `mean` and `std` only. Deterministic noise
/// returns `mean`.
pub fn reparam(g: &mut Graph, mean: Var, std: Var, noise: &mut Noise) -> Result<Var> {
    let shape = g.shape(mean).to_vec();
    match noise.draw(&shape)? {
        None => Ok(mean),
        Some(eps) => {
            let e = g.constant(eps);
            let scaled = g.mul(std, e)?;
            Ok(g.add(mean, scaled)?)
        }
    }
}

/// Batch mean of the per-row `KL(N(mean, std) || N(prior_mean, I))`.
/// A `None` mean stands for a posterior mean equal to `prior_mean`.
pub fn kl_to_standard(g: &mut Graph, mean: Option<Var>, std: Var, prior_mean: f64) -> Result<Var> {
    let shape = g.shape(std).to_vec();
    let rows = shape[0] as f64;
    let cells = g.value(std).len() as f64;
    let log_std = g.log(std);
    let neg_log = g.scale(log_std, -1.0);
    let var = g.square(std);
    let half_var = g.scale(var, 0.5);
    let mut acc = g.add(neg_log, half_var)?;
    if let Some(m) = mean {
        let diff = g.add_const(m, -prior_mean);
        let sq = g.square(diff);
        let half = g.scale(sq, 0.5);
        acc = g.add(acc, half)?;
    }
    let total = g.sum(acc);
    let total = g.add_const(total, -0.5 * cells);
    Ok(g.scale(total, 1.0 / rows))
}

/// Terms of the training objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveBreakdown {
    pub nll: f64,
    pub kl_omega: f64,
    pub kl_r: f64,
    pub total: f64,
    pub mc_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Monte-Carlo draws `L`.
    pub mc_samples: usize,
    pub kl_weight: f64,
    /// Weight on positive targets of the multi-label loss.
    pub pos_weight: f64,
    /// When false the KL terms are neither computed nor reported.
    pub include_kl: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { mc_samples: 1, kl_weight: 1.0, pos_weight: 1.0, include_kl: true }
    }
}

/// Graph nodes of one objective evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub nll: Var,
    pub kl_omega: Option<Var>,
    pub kl_r: Option<Var>,
}

/// Classification loss of `logits` against the batch labels.
pub fn nll(g: &mut Graph, logits: Var, labels: &BatchLabels, pos_weight: f64) -> Result<Var> {
    Ok(match labels {
        BatchLabels::Classes(c) => g.softmax_cross_entropy(logits, c)?,
        BatchLabels::Multi { targets, .. } => g.bce_with_logits(logits, targets, pos_weight)?,
    })
}

fn average(g: &mut Graph, vars: &[Var]) -> Result<Var> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = g.add(acc, v)?;
    }
    Ok(g.scale(acc, 1.0 / vars.len() as f64))
}

/// `(1/L) Σ_l nll_l + kl_weight * (KL_ω + KL_r)`, with both KL terms
/// averaged over the `L` draws and the batch. Modality 2 is taken from the
/// batch when present and reconstructed otherwise.
pub fn smil_loss(
    g: &mut Graph,
    net: &SmilNet,
    bound: &Bound,
    batch: &Batch,
    priors: Option<&ModalityPriors>,
    cfg: &LossConfig,
    noise: &mut Noise,
) -> Result<(LossVars, ObjectiveBreakdown)> {
    if cfg.mc_samples == 0 {
        return Err(Error::InvalidArgument("at least one Monte-Carlo sample is required".into()));
    }
    let audio = match &batch.modality2 {
        Some(t) => Audio::Present(t),
        None => Audio::Reconstruct,
    };
    let (mut nlls, mut kl_w, mut kl_r) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.mc_samples {
        let out = net.forward(g, bound, &batch.modality1, audio, priors, noise)?;
        nlls.push(nll(g, out.logits, &batch.labels, cfg.pos_weight)?);
        if cfg.include_kl {
            if let Some(w) = out.omega {
                kl_w.push(kl_to_standard(g, w.mean, w.std, 1.0)?);
            }
            if let Some(r) = out.r {
                kl_r.push(kl_to_standard(g, r.mean, r.std, 0.0)?);
            }
        }
    }
    let nll_v = average(g, &nlls)?;
    let kl_omega = if kl_w.is_empty() { None } else { Some(average(g, &kl_w)?) };
    let kl_rv = if kl_r.is_empty() { None } else { Some(average(g, &kl_r)?) };
    let mut total = nll_v;
    for kl in [kl_omega, kl_rv].into_iter().flatten() {
        let w = g.scale(kl, cfg.kl_weight);
        total = g.add(total, w)?;
    }
    let val = |v: Option<Var>| v.map(|v| g.value(v).item()).unwrap_or(0.0);
    let breakdown = ObjectiveBreakdown {
        nll: g.value(nll_v).item(),
        kl_omega: val(kl_omega),
        kl_r: val(kl_rv),
        total: g.value(total).item(),
        mc_samples: cfg.mc_samples,
    };
    Ok((LossVars { total, nll: nll_v, kl_omega, kl_r: kl_rv }, breakdown))
}
