use super::{BimodalDataset, BimodalSample, InputShape, Label, Schema};
use crate::error::{Error, Result};
use crate::random::{self, normal_vec, streams};
use rand::Rng;

/// Parameters of [`synth_bimodal`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_samples: usize,
    pub num_classes: usize,
    pub dim1: usize,
    pub dim2: usize,
    /// Width of the shared class latent.
    pub latent_dim: usize,
    pub noise_scale: f64,
    pub multi_label: bool,
    /// Probability that each class is active in a multi-label sample.
    pub label_density: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(num_samples: usize, num_classes: usize, dim1: usize, dim2: usize, noise_scale: f64, multi_label: bool, seed: u64) -> Self {
        Self { num_samples, num_classes, dim1, dim2, latent_dim: num_classes.max(2), noise_scale, multi_label, label_density: 0.3, seed }
    }

    pub fn schema(&self) -> Schema {
        Schema {
            modality1: InputShape::Vector(self.dim1),
            modality2: InputShape::Vector(self.dim2),
            num_classes: self.num_classes,
            multi_label: self.multi_label,
        }
    }
}

/// Two views of a shared class latent: `x_m = A_m z + noise * e_m`, where
/// `z` is the class prototype (or the sum of active prototypes) and `A_1`,
/// `A_2` are fixed random maps. Noise is independent per view, so the two
/// views together carry strictly more label information than either alone.
pub fn synth_bimodal(spec: &SynthSpec) -> Result<BimodalDataset> {
    if spec.dim1 < 2 || spec.dim2 < 2 || spec.num_classes < 2 || spec.latent_dim < 1 {
        return Err(Error::InvalidArgument("synthetic tasks need dims >= 2 and classes >= 2".into()));
    }
    let mut rng = random::rng(spec.seed, streams::SYNTH);
    let k = spec.latent_dim;
    let protos: Vec<Vec<f64>> = (0..spec.num_classes).map(|_| normal_vec(&mut rng, k)).collect();
    let scale = 1.0 / (k as f64).sqrt();
    let a1: Vec<f64> = normal_vec(&mut rng, spec.dim1 * k).into_iter().map(|v| v * scale).collect();
    let a2: Vec<f64> = normal_vec(&mut rng, spec.dim2 * k).into_iter().map(|v| v * scale).collect();
    let project = |a: &[f64], z: &[f64], d: usize| -> Vec<f64> {
        (0..d).map(|i| a[i * k..(i + 1) * k].iter().zip(z).map(|(x, y)| x * y).sum()).collect()
    };

    let mut samples = Vec::with_capacity(spec.num_samples);
    for id in 0..spec.num_samples {
        let (label, z) = if spec.multi_label {
            let mut bits: Vec<bool> = (0..spec.num_classes).map(|_| rng.random_bool(spec.label_density)).collect();
            if !bits.iter().any(|&b| b) {
                let c = rng.random_range(0..spec.num_classes);
                bits[c] = true;
            }
            let mut z = vec![0.0; k];
            for (c, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                z.iter_mut().zip(&protos[c]).for_each(|(a, b)| *a += b);
            }
            (Label::Multi(bits), z)
        } else {
            let c = rng.random_range(0..spec.num_classes);
            (Label::Class(c), protos[c].clone())
        };
        let mut x1 = project(&a1, &z, spec.dim1);
        let mut x2 = project(&a2, &z, spec.dim2);
        for v in x1.iter_mut() {
            *v += spec.noise_scale * normal_vec(&mut rng, 1)[0];
        }
        for v in x2.iter_mut() {
            *v += spec.noise_scale * normal_vec(&mut rng, 1)[0];
        }
        samples.push(BimodalSample { id, modality1: x1, modality2: Some(x2), label });
    }
    BimodalDataset::new(spec.schema(), samples)
}
