//! Classification metrics and evaluation under the two test-time patterns.

use crate::autodiff::{Graph, Tensor};
use crate::dataset::{Batch, BimodalSample, Label, MaskedDataset};
use crate::error::{Error, Result};
use crate::nn::{Audio, Reconstruction, SmilNet, Trainable};
use crate::par::{self, Execution};
use crate::priors::ModalityPriors;
use crate::random::{self, streams};
use crate::variational::Noise;

/// Fraction of positions where `preds` and `truth` agree.
pub fn accuracy<T: PartialEq>(preds: &[T], truth: &[T]) -> Result<f64> {
    if preds.len() != truth.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!("accuracy over {} predictions and {} labels", preds.len(), truth.len())));
    }
    Ok(preds.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / preds.len() as f64)
}

fn check_bits(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<()> {
    if pred.len() != truth.len() || pred.iter().zip(truth).any(|(p, t)| p.len() != t.len()) {
        return Err(Error::InvalidArgument("bit matrices differ in shape".into()));
    }
    Ok(())
}

fn counts(pred: &[bool], truth: &[bool]) -> (usize, usize, usize) {
    pred.iter().zip(truth).fold((0, 0, 0), |(tp, fp, fnn), (&p, &t)| match (p, t) {
        (true, true) => (tp + 1, fp, fnn),
        (true, false) => (tp, fp + 1, fnn),
        (false, true) => (tp, fp, fnn + 1),
        (false, false) => (tp, fp, fnn),
    })
}

fn f1_from(tp: usize, fp: usize, fnn: usize) -> f64 {
    let denom = 2 * tp + fp + fnn;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// F1 over the pooled cell counts.
pub fn f1_micro(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    check_bits(pred, truth)?;
    let (tp, fp, fnn) = pred.iter().zip(truth).map(|(p, t)| counts(p, t)).fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(f1_from(tp, fp, fnn))
}

/// Mean of the per-row F1 scores.
pub fn f1_samples(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    check_bits(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument("f1 over zero rows".into()));
    }
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let (tp, fp, fnn) = counts(p, t);
            f1_from(tp, fp, fnn)
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// F1 of class 1 in a two-class problem.
pub fn f1_binary(preds: &[usize], truth: &[usize]) -> Result<f64> {
    let p: Vec<Vec<bool>> = preds.iter().map(|&c| vec![c == 1]).collect();
    let t: Vec<Vec<bool>> = truth.iter().map(|&c| vec![c == 1]).collect();
    f1_micro(&p, &t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSet {
    pub accuracy: f64,
    pub f1_binary: Option<f64>,
    pub f1_micro: Option<f64>,
    pub f1_samples: Option<f64>,
}

impl MetricSet {
    /// `(name, value)` for every present metric.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("accuracy", self.accuracy)];
        for (n, v) in [("f1_binary", self.f1_binary), ("f1_micro", self.f1_micro), ("f1_samples", self.f1_samples)] {
            if let Some(v) = v {
                out.push((n, v));
            }
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

/// Which modalities are available at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    Full,
    ImageOnly,
}

impl Pattern {
    pub const ALL: [Pattern; 2] = [Pattern::Full, Pattern::ImageOnly];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Full => "full",
            Pattern::ImageOnly => "image-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Latents at their means.
    #[default]
    Deterministic,
    /// Class probabilities averaged over this many draws.
    Stochastic(usize),
}

const CHUNK: usize = 64;

/// Class probabilities (softmax, or per-class sigmoid for multi-label) for
/// every sample. Parameters are only read.
pub fn predict_probs(
    net: &SmilNet,
    priors: Option<&ModalityPriors>,
    data: &MaskedDataset,
    pattern: Pattern,
    mode: EvalMode,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if data.is_empty() {
        return Err(Error::InsufficientData("nothing to evaluate".into()));
    }
    let arch = &net.arch;
    let audio_kind = match (pattern, arch.fused) {
        (_, false) => AudioKind::Ignored,
        (Pattern::Full, true) => AudioKind::Present,
        (Pattern::ImageOnly, true) => match arch.reconstruction {
            Reconstruction::Off => AudioKind::Zero,
            Reconstruction::Priors { .. } if priors.is_none() => {
                return Err(Error::InvalidArgument("image-only evaluation of this model needs its priors".into()))
            }
            _ => AudioKind::Reconstruct,
        },
    };
    let draws = match mode {
        EvalMode::Deterministic => 1,
        EvalMode::Stochastic(0) => return Err(Error::InvalidArgument("stochastic evaluation needs at least one draw".into())),
        EvalMode::Stochastic(l) => l,
    };
    let refs: Vec<(usize, &BimodalSample)> = data.samples.iter().enumerate().collect();
    let chunks = par::map_chunks(exec, &refs, CHUNK, |chunk| -> Result<Vec<Vec<f64>>> {
        let samples: Vec<&BimodalSample> = chunk.iter().map(|(_, s)| *s).collect();
        let batch = Batch::from_samples(&data.schema, &samples, audio_kind == AudioKind::Present)?;
        let mut noise = match mode {
            EvalMode::Deterministic => Noise::deterministic(),
            // Keyed by chunk start so results do not depend on scheduling.
            EvalMode::Stochastic(_) => Noise::stream(random::rng(seed ^ (chunk[0].0 as u64).rotate_left(32), streams::EVAL)),
        };
        chunk_probs(net, priors, &batch, audio_kind, draws, &mut noise)
    });
    let mut out = Vec::with_capacity(data.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AudioKind {
    Present,
    Reconstruct,
    Zero,
    Ignored,
}

fn chunk_probs(
    net: &SmilNet,
    priors: Option<&ModalityPriors>,
    batch: &Batch,
    kind: AudioKind,
    draws: usize,
    noise: &mut Noise,
) -> Result<Vec<Vec<f64>>> {
    let rows = batch.len();
    let classes = net.arch.schema.num_classes;
    let multi = net.arch.schema.multi_label;
    let mut acc = vec![vec![0.0; classes]; rows];
    for _ in 0..draws {
        let mut g = Graph::new();
        let b = net.bind(&mut g, Trainable::NONE);
        let audio = match kind {
            AudioKind::Present => Audio::Present(batch.modality2.as_ref().expect("batch built with modality 2")),
            AudioKind::Reconstruct => Audio::Reconstruct,
            AudioKind::Zero | AudioKind::Ignored => Audio::Zero,
        };
        let out = net.forward(&mut g, &b, &batch.modality1, audio, priors, noise)?;
        let logits: &Tensor = g.value(out.logits);
        for (r, row) in logits.data().chunks(classes).enumerate() {
            let probs = if multi { sigmoid_row(row) } else { softmax_row(row) };
            for (a, p) in acc[r].iter_mut().zip(probs) {
                *a += p / draws as f64;
            }
        }
    }
    Ok(acc)
}

fn softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn sigmoid_row(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
}

fn argmax(p: &[f64]) -> usize {
    // First maximum wins ties.
    p.iter().enumerate().fold(0, |best, (i, v)| if *v > p[best] { i } else { best })
}

/// Metrics from class probabilities. Multi-label rows are thresholded at
/// 0.5 and accuracy is exact-match.
pub fn metrics_from_probs(probs: &[Vec<f64>], labels: &[&Label], num_classes: usize) -> Result<MetricSet> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidArgument("probabilities and labels differ in length".into()));
    }
    if labels.iter().all(|l| matches!(l, Label::Class(_))) {
        let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let truth: Vec<usize> = labels
            .iter()
            .map(|l| match l {
                Label::Class(c) => *c,
                Label::Multi(_) => unreachable!(),
            })
            .collect();
        let f1b = if num_classes == 2 { Some(f1_binary(&preds, &truth)?) } else { None };
        return Ok(MetricSet { accuracy: accuracy(&preds, &truth)?, f1_binary: f1b, f1_micro: None, f1_samples: None });
    }
    let preds: Vec<Vec<bool>> = probs.iter().map(|p| p.iter().map(|v| *v > 0.5).collect()).collect();
    let truth = labels
        .iter()
        .map(|l| match l {
            Label::Multi(bits) => Ok(bits.clone()),
            Label::Class(_) => Err(Error::InvalidArgument("mixed single- and multi-label data".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricSet {
        accuracy: accuracy(&preds, &truth)?,
        f1_binary: None,
        f1_micro: Some(f1_micro(&preds, &truth)?),
        f1_samples: Some(f1_samples(&preds, &truth)?),
    })
}

/// Metrics of `net` on `data` under `pattern`.
pub fn evaluate(
    net: &SmilNet,
    priors: Option<&ModalityPriors>,
    data: &MaskedDataset,
    pattern: Pattern,
    mode: EvalMode,
    seed: u64,
    exec: Execution,
) -> Result<MetricSet> {
    let probs = predict_probs(net, priors, data, pattern, mode, seed, exec)?;
    let labels: Vec<&Label> = data.samples.iter().map(|s| &s.label).collect();
    metrics_from_probs(&probs, &labels, data.schema.num_classes)
}
