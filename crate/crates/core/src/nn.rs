//! Networks: modality encoders and fusion head (θ), the reconstruction
//! network (φc) and the regularization network (φr), plus checkpoints.

use crate::autodiff::kernels::softplus;
use crate::autodiff::{Gradients, Graph, Tensor, Var};
use crate::dataset::{InputShape, Schema};
use crate::error::{Error, Result};
use crate::priors::{ModalityPriors, PriorSpace};
use crate::random::{self, streams};
use crate::variational::{reparam, Noise};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Width of every modality feature.
pub const FEATURE_DIM: usize = 64;
/// Width of the regularized hidden layer.
pub const HIDDEN_DIM: usize = 64;
/// Floor added to every predicted standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// `ln(e - 1)`, the point where Softplus equals 1.
pub fn softplus_inverse_of_one() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// Named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.entries.push((name.into(), t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Total number of scalars.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Adds every tensor to `g`, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) }).collect()
    }

    /// Gradients for the bound `vars`, zeros where none flowed.
    pub fn gradients(&self, grads: &Gradients, vars: &[Var]) -> Vec<Tensor> {
        self.entries.iter().zip(vars).map(|((_, t), &v)| grads.get_or_zeros(v, t)).collect()
    }

    /// `self += alpha * delta`.
    pub fn axpy(&mut self, alpha: f64, delta: &[Tensor]) {
        for ((_, t), d) in self.entries.iter_mut().zip(delta) {
            for (p, g) in t.data_mut().iter_mut().zip(d.data()) {
                *p += alpha * g;
            }
        }
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect()
    }

    fn glorot(&mut self, name: String, shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
        self.push(name, Tensor::new(shape, data).expect("positive dims"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
}

impl Dense {
    fn new(p: &mut Params, name: &str, inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = p.glorot(format!("{name}.weight"), vec![inp, out], inp, out, rng);
        let b = p.push(format!("{name}.bias"), Tensor::zeros([out]));
        Self { w, b }
    }

    fn forward(self, g: &mut Graph, v: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, v[self.w])?;
        Ok(g.add_bias(y, v[self.b])?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Conv {
    k: usize,
    b: usize,
}

impl Conv {
    fn new(p: &mut Params, name: &str, inp: usize, out: usize, size: usize, rng: &mut ChaCha8Rng) -> Self {
        let k = p.glorot(format!("{name}.kernel"), vec![out, inp, size, size], inp * size * size, out * size * size, rng);
        let b = p.push(format!("{name}.bias"), Tensor::zeros([out]));
        Self { k, b }
    }

    fn forward(self, g: &mut Graph, v: &[Var], x: Var) -> Result<Var> {
        Ok(g.conv2d(x, v[self.k], v[self.b])?)
    }
}

/// Maps one modality to a [`FEATURE_DIM`] feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoder {
    /// LeNet-5 on 28×28 images zero-padded to 32×32.
    LeNetImage { c1: Conv, c2: Conv, d1: Dense, d2: Dense },
    /// LeNet-5 variant for 20×20 MFCC maps.
    LeNetAudio { c1: Conv, c2: Conv, d: Dense },
    /// Two dense layers for vector inputs.
    Mlp { d1: Dense, d2: Dense },
}

impl Encoder {
    fn new(p: &mut Params, name: &str, shape: InputShape, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(match shape {
            InputShape::Grid { h: 28, w: 28 } => Encoder::LeNetImage {
                c1: Conv::new(p, &format!("{name}.conv1"), 1, 6, 5, rng),
                c2: Conv::new(p, &format!("{name}.conv2"), 6, 16, 5, rng),
                d1: Dense::new(p, &format!("{name}.fc1"), 400, 120, rng),
                d2: Dense::new(p, &format!("{name}.fc2"), 120, FEATURE_DIM, rng),
            },
            InputShape::Grid { h: 20, w: 20 } => Encoder::LeNetAudio {
                c1: Conv::new(p, &format!("{name}.conv1"), 1, 6, 5, rng),
                c2: Conv::new(p, &format!("{name}.conv2"), 6, 16, 5, rng),
                d: Dense::new(p, &format!("{name}.fc"), 256, FEATURE_DIM, rng),
            },
            InputShape::Vector(d) if d > 0 => Encoder::Mlp {
                d1: Dense::new(p, &format!("{name}.fc1"), d, FEATURE_DIM, rng),
                d2: Dense::new(p, &format!("{name}.fc2"), FEATURE_DIM, FEATURE_DIM, rng),
            },
            other => return Err(Error::InvalidArgument(format!("no encoder for {other} inputs"))),
        })
    }

    /// `x`: `[B, 1, h, w]` for grids, `[B, d]` for vectors.
    fn forward(&self, g: &mut Graph, v: &[Var], x: Var) -> Result<Var> {
        match *self {
            Encoder::LeNetImage { c1, c2, d1, d2 } => {
                let x = g.pad2d(x, 2)?;
                let x = c1.forward(g, v, x)?;
                let x = g.relu(x);
                let x = g.maxpool2(x)?;
                let x = c2.forward(g, v, x)?;
                let x = g.relu(x);
                let x = g.maxpool2(x)?;
                let x = g.flatten(x)?;
                let x = d1.forward(g, v, x)?;
                let x = g.relu(x);
                let x = d2.forward(g, v, x)?;
                Ok(g.relu(x))
            }
            Encoder::LeNetAudio { c1, c2, d } => {
                let x = c1.forward(g, v, x)?;
                let x = g.relu(x);
                let x = g.maxpool2(x)?;
                let x = c2.forward(g, v, x)?;
                let x = g.relu(x);
                let x = g.flatten(x)?;
                let x = d.forward(g, v, x)?;
                Ok(g.relu(x))
            }
            Encoder::Mlp { d1, d2 } => {
                let x = d1.forward(g, v, x)?;
                let x = g.relu(x);
                let x = d2.forward(g, v, x)?;
                Ok(g.relu(x))
            }
        }
    }
}

/// Shape of the input nodes for a flat batch of `shape` values.
fn input_shape(shape: InputShape, batch: usize) -> Vec<usize> {
    shape.batch_shape(batch)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaMean {
    /// `ω ~ N(1, σ(x¹))`.
    Fixed,
    /// φc also predicts the mean, as `1 + offset`.
    Learned,
}

impl OmegaMean {
    pub fn name(self) -> &'static str {
        match self {
            OmegaMean::Fixed => "fixed",
            OmegaMean::Learned => "learned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [OmegaMean::Fixed, OmegaMean::Learned].into_iter().find(|o| o.name() == s)
    }
}

/// How a missing second modality is filled in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reconstruction {
    /// No reconstruction network; missing audio cannot be handled.
    Off,
    /// `x̂² = Σ_k ω_k ℳ_k` with `k` priors.
    Priors { k: usize, space: PriorSpace, omega_mean: OmegaMean },
    /// φc emits the missing modality (or its feature) directly.
    Direct { space: PriorSpace },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularization {
    Off,
    /// `r ~ N(μ, σ)` from φr.
    Learned,
    /// `r ~ N(0, I)`.
    FixedGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegOp {
    Mul,
    Add,
}

impl RegOp {
    pub fn name(self) -> &'static str {
        match self {
            RegOp::Mul => "mul",
            RegOp::Add => "add",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [RegOp::Mul, RegOp::Add].into_iter().find(|o| o.name() == s)
    }
}

/// Everything that fixes parameter shapes and the forward computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Architecture {
    pub schema: Schema,
    /// False for the single-modality network (image encoder and head only).
    pub fused: bool,
    pub reconstruction: Reconstruction,
    pub regularization: Regularization,
    pub reg_op: RegOp,
}

impl Architecture {
    /// Plain fused classifier with no auxiliary networks.
    pub fn fused(schema: Schema) -> Self {
        Self { schema, fused: true, reconstruction: Reconstruction::Off, regularization: Regularization::Off, reg_op: RegOp::Mul }
    }

    pub fn image_only(schema: Schema) -> Self {
        Self { fused: false, ..Self::fused(schema) }
    }

    /// The full method with `k` input-space priors.
    pub fn smil(schema: Schema, k: usize) -> Self {
        Self {
            schema,
            fused: true,
            reconstruction: Reconstruction::Priors { k, space: PriorSpace::Input, omega_mean: OmegaMean::Fixed },
            regularization: Regularization::Learned,
            reg_op: RegOp::Mul,
        }
    }

    /// Dimension of the reconstructed modality.
    pub fn prior_dim(&self, space: PriorSpace) -> usize {
        match space {
            PriorSpace::Input => self.schema.modality2.len(),
            PriorSpace::Embedding => FEATURE_DIM,
        }
    }

    pub fn describe(&self) -> String {
        let recon = match self.reconstruction {
            Reconstruction::Off => "off".to_string(),
            Reconstruction::Priors { k, space, omega_mean } => {
                format!("priors(k={k},space={},omega_mean={})", space.name(), omega_mean.name())
            }
            Reconstruction::Direct { space } => format!("direct(space={})", space.name()),
        };
        let reg = match self.regularization {
            Regularization::Off => "off",
            Regularization::Learned => "learned",
            Regularization::FixedGaussian => "fixed-gaussian",
        };
        format!(
            "m1={};m2={};classes={};multi={};fused={};recon={recon};reg={reg};op={}",
            self.schema.modality1,
            self.schema.modality2,
            self.schema.num_classes,
            self.schema.multi_label,
            self.fused,
            self.reg_op.name()
        )
    }
}

/// θ: encoders and the fusion head.
#[derive(Clone, Debug, PartialEq)]
pub struct MainNet {
    pub params: Params,
    image: Encoder,
    audio: Option<Encoder>,
    hidden: Dense,
    out: Dense,
}

impl MainNet {
    fn new(arch: &Architecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut p = Params::new();
        let image = Encoder::new(&mut p, "image", arch.schema.modality1, rng)?;
        let audio = if arch.fused { Some(Encoder::new(&mut p, "audio", arch.schema.modality2, rng)?) } else { None };
        let width = if arch.fused { 2 * FEATURE_DIM } else { FEATURE_DIM };
        let hidden = Dense::new(&mut p, "head.hidden", width, HIDDEN_DIM, rng);
        let out = Dense::new(&mut p, "head.out", HIDDEN_DIM, arch.schema.num_classes, rng);
        Ok(Self { params: p, image, audio, hidden, out })
    }
}

/// φc.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconNet {
    pub params: Params,
    d1: Dense,
    d2: Dense,
}

/// φr.
#[derive(Clone, Debug, PartialEq)]
pub struct RegNet {
    pub params: Params,
    d1: Dense,
    d2: Dense,
}

/// Bound graph leaves for each parameter group.
#[derive(Clone, Debug)]
pub struct Bound {
    pub main: Vec<Var>,
    pub recon: Vec<Var>,
    pub reg: Vec<Var>,
}

/// Which parameter groups receive gradients when bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub main: bool,
    pub recon: bool,
    pub reg: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable { main: true, recon: true, reg: true };
    pub const NONE: Trainable = Trainable { main: false, recon: false, reg: false };
}

/// Source of the second modality for one forward pass.
#[derive(Clone, Copy, Debug)]
pub enum Audio<'a> {
    Present(&'a Tensor),
    /// Fill in through φc (and the priors when configured).
    Reconstruct,
    /// A zero feature in place of the audio encoding.
    Zero,
}

/// Graph nodes of a diagonal Gaussian. A `None` mean is the fixed prior
/// mean.
#[derive(Clone, Copy, Debug)]
pub struct GaussVars {
    pub mean: Option<Var>,
    pub std: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub logits: Var,
    /// Posterior over the prior weights ω, when reconstruction sampled it.
    pub omega: Option<GaussVars>,
    /// Posterior over the regularizer r, when φr produced it.
    pub r: Option<GaussVars>,
    /// The modality-2 feature that entered the fusion layer.
    pub audio_feature: Option<Var>,
}

/// All three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct SmilNet {
    pub arch: Architecture,
    pub main: MainNet,
    pub recon: Option<ReconNet>,
    pub reg: Option<RegNet>,
}

impl SmilNet {
    /// Glorot-uniform weights and zero biases drawn from `seed`; φr's mean
    /// bias starts at `ln(e-1)`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = random::rng(seed, streams::INIT);
        let main = MainNet::new(&arch, &mut rng)?;
        let recon = match arch.reconstruction {
            Reconstruction::Off => None,
            _ if !arch.fused => {
                return Err(Error::Config("reconstruction needs the fused network".into()));
            }
            Reconstruction::Priors { k, omega_mean, .. } => {
                if k == 0 {
                    return Err(Error::Config("at least one prior is required".into()));
                }
                let out = if omega_mean == OmegaMean::Learned { 2 * k } else { k };
                Some(ReconNet::new(out, &mut rng))
            }
            Reconstruction::Direct { space } => Some(ReconNet::new(arch.prior_dim(space), &mut rng)),
        };
        let reg = match arch.regularization {
            Regularization::Learned if !arch.fused => {
                return Err(Error::Config("regularization needs the fused network".into()));
            }
            Regularization::Learned => {
                let mut net = RegNet::new(&mut rng);
                let b = net.params.get_mut(net.d2.b);
                b.data_mut()[..HIDDEN_DIM].fill(softplus_inverse_of_one());
                Some(net)
            }
            _ => None,
        };
        Ok(Self { arch, main, recon, reg })
    }

    pub fn bind(&self, g: &mut Graph, t: Trainable) -> Bound {
        Bound {
            main: self.main.params.bind(g, t.main),
            recon: self.recon.as_ref().map(|r| r.params.bind(g, t.recon)).unwrap_or_default(),
            reg: self.reg.as_ref().map(|r| r.params.bind(g, t.reg)).unwrap_or_default(),
        }
    }

    /// Like [`SmilNet::bind`] with `main` standing in for θ (same layout).
    pub fn bind_with_main(&self, g: &mut Graph, main: &Params, t: Trainable) -> Bound {
        Bound {
            main: main.bind(g, t.main),
            recon: self.recon.as_ref().map(|r| r.params.bind(g, t.recon)).unwrap_or_default(),
            reg: self.reg.as_ref().map(|r| r.params.bind(g, t.reg)).unwrap_or_default(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.groups().map(Params::num_values).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().all(Params::is_finite)
    }

    /// Parameter groups in the order main, recon, reg.
    pub fn groups(&self) -> impl Iterator<Item = &Params> {
        std::iter::once(&self.main.params).chain(self.recon.as_ref().map(|r| &r.params)).chain(self.reg.as_ref().map(|r| &r.params))
    }

    pub fn groups_mut(&mut self) -> impl Iterator<Item = &mut Params> {
        std::iter::once(&mut self.main.params)
            .chain(self.recon.as_mut().map(|r| &mut r.params))
            .chain(self.reg.as_mut().map(|r| &mut r.params))
    }

    /// Modality-1 feature, `[B, FEATURE_DIM]`.
    pub fn encode_image(&self, g: &mut Graph, b: &Bound, x1: &Tensor) -> Result<Var> {
        let shape = input_shape(self.arch.schema.modality1, batch_rows(x1)?);
        let x = g.constant(x1.clone().reshape(shape)?);
        self.main.image.forward(g, &b.main, x)
    }

    /// Modality-2 feature from raw (flattened) inputs held in `x`.
    pub fn encode_audio_var(&self, g: &mut Graph, b: &Bound, x: Var) -> Result<Var> {
        let enc = self.main.audio.ok_or_else(|| Error::Config("single-modality network has no audio encoder".into()))?;
        let rows = g.shape(x)[0];
        let x = g.reshape(x, &input_shape(self.arch.schema.modality2, rows))?;
        enc.forward(g, &b.main, x)
    }

    /// Inference-only audio features, one row per input.
    pub fn audio_features(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let b = self.bind(&mut g, Trainable::NONE);
        let flat: Vec<f64> = xs.concat();
        let x = g.constant(Tensor::new([xs.len(), xs[0].len()], flat)?);
        let f = self.encode_audio_var(&mut g, &b, x)?;
        Ok(g.value(f).data().chunks(FEATURE_DIM).map(<[f64]>::to_vec).collect())
    }

    /// Image feature to the missing modality's fusion feature, plus the ω
    /// posterior when sampled.
    fn reconstruct(
        &self,
        g: &mut Graph,
        b: &Bound,
        f1: Var,
        priors: Option<&ModalityPriors>,
        noise: &mut Noise,
    ) -> Result<(Var, Option<GaussVars>)> {
        let recon = self.recon.as_ref().ok_or_else(|| Error::MissingModality("modality 2 is missing and reconstruction is off".into()))?;
        // φc reads the image feature without differentiating into θ.
        let input = g.detach(f1);
        let raw = recon.forward(g, &b.recon, input)?;
        let rows = g.shape(f1)[0];
        let (x_hat, spec, space) = match self.arch.reconstruction {
            Reconstruction::Priors { k, space, omega_mean } => {
                let priors = priors.ok_or_else(|| Error::MissingModality("reconstruction needs modality priors".into()))?;
                if priors.k() != k || priors.dim() != self.arch.prior_dim(space) || priors.space != space {
                    return Err(Error::InvalidArgument(format!(
                        "priors are {}x{} in {} space, network expects {k}x{} in {} space",
                        priors.k(),
                        priors.dim(),
                        priors.space.name(),
                        self.arch.prior_dim(space),
                        space.name()
                    )));
                }
                let raw_std = if omega_mean == OmegaMean::Learned { g.slice_cols(raw, 0, k)? } else { raw };
                let sp = g.softplus(raw_std);
                let std = g.add_const(sp, STD_FLOOR);
                let (mean_var, mean) = match omega_mean {
                    OmegaMean::Fixed => (g.constant(Tensor::filled([rows, k], 1.0)), None),
                    OmegaMean::Learned => {
                        let off = g.slice_cols(raw, k, k)?;
                        let m = g.add_const(off, 1.0);
                        (m, Some(m))
                    }
                };
                let omega = reparam(g, mean_var, std, noise)?;
                let m = g.constant(Tensor::new([k, priors.dim()], priors.flat())?);
                (g.matmul(omega, m)?, Some(GaussVars { mean, std }), space)
            }
            Reconstruction::Direct { space } => (raw, None, space),
            Reconstruction::Off => unreachable!("checked above"),
        };
        let feature = match space {
            PriorSpace::Input => self.encode_audio_var(g, b, x_hat)?,
            PriorSpace::Embedding => x_hat,
        };
        Ok((feature, spec))
    }

    /// Logits for a batch, with the latent posteriors used on the way.
    pub fn forward(
        &self,
        g: &mut Graph,
        b: &Bound,
        x1: &Tensor,
        audio: Audio<'_>,
        priors: Option<&ModalityPriors>,
        noise: &mut Noise,
    ) -> Result<Forward> {
        let rows = batch_rows(x1)?;
        let f1 = self.encode_image(g, b, x1)?;
        let mut omega = None;
        let (fused, audio_feature) = if self.arch.fused {
            let f2 = match audio {
                Audio::Present(x2) => {
                    if batch_rows(x2)? != rows {
                        return Err(Error::InvalidArgument("modality batches differ in size".into()));
                    }
                    let x = g.constant(x2.clone().reshape([rows, self.arch.schema.modality2.len()])?);
                    self.encode_audio_var(g, b, x)?
                }
                Audio::Reconstruct => {
                    let (f, spec) = self.reconstruct(g, b, f1, priors, noise)?;
                    omega = spec;
                    f
                }
                Audio::Zero => g.constant(Tensor::zeros([rows, FEATURE_DIM])),
            };
            (g.concat(&[f1, f2])?, Some(f2))
        } else {
            (f1, None)
        };
        let h = self.main.hidden.forward(g, &b.main, fused)?;
        let mut h = g.relu(h);
        let mut r_spec = None;
        let gate = match self.arch.regularization {
            Regularization::Off => None,
            Regularization::Learned => {
                let reg = self.reg.as_ref().expect("constructed with the architecture");
                let input = g.detach(fused);
                let out = reg.forward(g, &b.reg, input)?;
                let mean = g.slice_cols(out, 0, HIDDEN_DIM)?;
                let raw = g.slice_cols(out, HIDDEN_DIM, HIDDEN_DIM)?;
                let sp = g.softplus(raw);
                let std = g.add_const(sp, STD_FLOOR);
                r_spec = Some(GaussVars { mean: Some(mean), std });
                Some(reparam(g, mean, std, noise)?)
            }
            Regularization::FixedGaussian => {
                let zero = g.constant(Tensor::zeros([rows, HIDDEN_DIM]));
                let one = g.constant(Tensor::filled([rows, HIDDEN_DIM], 1.0));
                Some(reparam(g, zero, one, noise)?)
            }
        };
        if let Some(r) = gate {
            let s = g.softplus(r);
            h = match self.arch.reg_op {
                RegOp::Mul => g.mul(h, s)?,
                RegOp::Add => g.add(h, s)?,
            };
        }
        let logits = self.main.out.forward(g, &b.main, h)?;
        Ok(Forward { logits, omega, r: r_spec, audio_feature })
    }

    /// Every parameter with a group prefix, for checkpoints.
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, p) in ["theta", "phi_c", "phi_r"].iter().zip([
            Some(&self.main.params),
            self.recon.as_ref().map(|r| &r.params),
            self.reg.as_ref().map(|r| &r.params),
        ]) {
            if let Some(p) = p {
                out.extend(p.iter().map(|(n, t)| (format!("{prefix}/{n}"), t)));
            }
        }
        out
    }

    /// FNV-1a over the architecture description and parameter layout.
    pub fn architecture_hash(&self) -> u64 {
        let mut text = self.arch.describe();
        for (name, t) in self.named() {
            text.push_str(&format!(";{name}{:?}", t.shape()));
        }
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let named = self.named();
        let mut out = b"SMILW".to_vec();
        out.extend(self.architecture_hash().to_le_bytes());
        out.extend((named.len() as u32).to_le_bytes());
        for (name, t) in named {
            out.extend((name.len() as u32).to_le_bytes());
            out.extend(name.as_bytes());
            out.extend((t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend((d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    /// Loads parameters saved by [`SmilNet::encode_checkpoint`] into a
    /// network built for `arch`.
    pub fn decode_checkpoint(arch: Architecture, bytes: &[u8]) -> Result<Self> {
        let mut net = Self::new(arch, 0)?;
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != b"SMILW" {
            return Err(Error::format("checkpoint", 0, "missing SMILW header"));
        }
        let hash = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if hash != net.architecture_hash() {
            return Err(Error::format("checkpoint", 5, "architecture hash does not match the configuration"));
        }
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::format("checkpoint", r.pos as u64, "parameter name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            blocks.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", r.pos as u64, "trailing bytes"));
        }
        let mut blocks = blocks.into_iter();
        for (prefix, params) in ["theta", "phi_c", "phi_r"].into_iter().zip(net.groups_mut_labeled()) {
            let Some(params) = params else { continue };
            for i in 0..params.len() {
                let (name, t) = blocks.next().ok_or_else(|| Error::format("checkpoint", bytes.len() as u64, "missing parameter blocks"))?;
                let want = format!("{prefix}/{}", params.name(i));
                if name != want || t.shape() != params.get(i).shape() {
                    return Err(Error::format("checkpoint", 0, format!("block {name} does not match {want}")));
                }
                *params.get_mut(i) = t;
            }
        }
        Ok(net)
    }

    fn groups_mut_labeled(&mut self) -> [Option<&mut Params>; 3] {
        [Some(&mut self.main.params), self.recon.as_mut().map(|r| &mut r.params), self.reg.as_mut().map(|r| &mut r.params)]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.encode_checkpoint())?)
    }

    pub fn load(arch: Architecture, path: &Path) -> Result<Self> {
        Self::decode_checkpoint(arch, &std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("checkpoint", self.bytes.len() as u64, "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn batch_rows(t: &Tensor) -> Result<usize> {
    t.shape().first().copied().ok_or_else(|| Error::InvalidArgument("empty batch".into()))
}

impl ReconNet {
    fn new(out: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Params::new();
        let d1 = Dense::new(&mut p, "recon.fc1", FEATURE_DIM, FEATURE_DIM, rng);
        let d2 = Dense::new(&mut p, "recon.fc2", FEATURE_DIM, out, rng);
        Self { params: p, d1, d2 }
    }

    fn forward(&self, g: &mut Graph, v: &[Var], x: Var) -> Result<Var> {
        let h = self.d1.forward(g, v, x)?;
        let h = g.relu(h);
        self.d2.forward(g, v, h)
    }
}

impl RegNet {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut p = Params::new();
        let d1 = Dense::new(&mut p, "reg.fc1", 2 * FEATURE_DIM, HIDDEN_DIM, rng);
        let d2 = Dense::new(&mut p, "reg.fc2", HIDDEN_DIM, 2 * HIDDEN_DIM, rng);
        Self { params: p, d1, d2 }
    }

    fn forward(&self, g: &mut Graph, v: &[Var], x: Var) -> Result<Var> {
        let h = self.d1.forward(g, v, x)?;
        let h = g.relu(h);
        self.d2.forward(g, v, h)
    }
}

/// Image-to-modality-2 regressor used by the imputation baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputer {
    pub params: Params,
    encoder: Encoder,
    d1: Dense,
    d2: Dense,
    schema: Schema,
}

impl Imputer {
    pub fn new(schema: Schema, seed: u64) -> Result<Self> {
        let mut rng = random::rng(seed, streams::INIT);
        let mut p = Params::new();
        let encoder = Encoder::new(&mut p, "ae.image", schema.modality1, &mut rng)?;
        let d1 = Dense::new(&mut p, "ae.fc1", FEATURE_DIM, 2 * FEATURE_DIM, &mut rng);
        let d2 = Dense::new(&mut p, "ae.fc2", 2 * FEATURE_DIM, schema.modality2.len(), &mut rng);
        Ok(Self { params: p, encoder, d1, d2, schema })
    }

    /// `[B, modality2.len()]` predictions.
    pub fn forward(&self, g: &mut Graph, v: &[Var], x1: &Tensor) -> Result<Var> {
        let rows = batch_rows(x1)?;
        let x = g.constant(x1.clone().reshape(input_shape(self.schema.modality1, rows))?);
        let f = self.encoder.forward(g, v, x)?;
        let h = self.d1.forward(g, v, f)?;
        let h = g.relu(h);
        self.d2.forward(g, v, h)
    }

    pub fn predict(&self, x1: &Tensor) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let v = self.params.bind(&mut g, false);
        let y = self.forward(&mut g, &v, x1)?;
        Ok(g.value(y).data().chunks(self.schema.modality2.len()).map(<[f64]>::to_vec).collect())
    }
}

/// Value-level `softplus(raw) + STD_FLOOR`.
pub fn std_from_raw(raw: f64) -> f64 {
    softplus(raw) + STD_FLOOR
}

/// Value-level `x̂² = Σ_k ω_k ℳ_k`.
pub fn reconstruct(omega: &[f64], priors: &ModalityPriors) -> Result<Vec<f64>> {
    if omega.len() != priors.k() {
        return Err(Error::InvalidArgument(format!("{} weights for {} priors", omega.len(), priors.k())));
    }
    let mut out = vec![0.0; priors.dim()];
    for (w, m) in omega.iter().zip(&priors.vectors) {
        out.iter_mut().zip(m).for_each(|(o, v)| *o += w * v);
    }
    Ok(out)
}

/// Value-level feature regularization.
pub fn regularize(h: &[f64], r: &[f64], op: RegOp) -> Vec<f64> {
    h.iter()
        .zip(r)
        .map(|(&x, &r)| match op {
            RegOp::Mul => x * softplus(r),
            RegOp::Add => x + softplus(r),
        })
        .collect()
}
