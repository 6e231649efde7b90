//! Bimodal samples, the complete/incomplete split, and data sources.

mod avmnist;
mod idx;
mod manifest;
mod split;
mod synth;

pub use avmnist::{
    generate_avmnist_corpus, load_prepared, prepare_dataset, CorpusSpec, PreparedDataset, AUDIO_DIR, IMAGES_FILE, LABELS_FILE,
};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx_images, parse_idx_images, parse_idx_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use manifest::{read_manifest, write_manifest, Manifest, ManifestRecord};
pub use split::{complete_count, mask_modality, pair_and_split, pair_by_class, split_dataset};
pub use synth::{synth_bimodal, SynthSpec};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Geometry of one modality's input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputShape {
    /// Single-channel `h × w` map.
    Grid {
        h: usize,
        w: usize,
    },
    Vector(usize),
}

impl InputShape {
    pub fn len(self) -> usize {
        match self {
            InputShape::Grid { h, w } => h * w,
            InputShape::Vector(d) => d,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn batch_shape(self, batch: usize) -> Vec<usize> {
        match self {
            InputShape::Grid { h, w } => vec![batch, 1, h, w],
            InputShape::Vector(d) => vec![batch, d],
        }
    }
}

impl std::fmt::Display for InputShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputShape::Grid { h, w } => write!(f, "{h}x{w}"),
            InputShape::Vector(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Label {
    Class(usize),
    /// One flag per class.
    Multi(Vec<bool>),
}

impl Label {
    pub fn encode(&self) -> String {
        match self {
            Label::Class(c) => c.to_string(),
            Label::Multi(bits) => bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
        }
    }

    pub fn decode(s: &str, multi_label: bool) -> Option<Label> {
        if multi_label {
            s.chars()
                .map(|c| match c {
                    '0' => Some(false),
                    '1' => Some(true),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
                .map(Label::Multi)
        } else {
            s.parse().ok().map(Label::Class)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BimodalSample {
    /// Position in the source corpus.
    pub id: usize,
    pub modality1: Vec<f64>,
    pub modality2: Option<Vec<f64>>,
    pub label: Label,
}

impl BimodalSample {
    pub fn is_complete(&self) -> bool {
        self.modality2.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schema {
    pub modality1: InputShape,
    pub modality2: InputShape,
    pub num_classes: usize,
    pub multi_label: bool,
}

impl Schema {
    pub fn avmnist() -> Self {
        Self {
            modality1: InputShape::Grid { h: 28, w: 28 },
            modality2: InputShape::Grid { h: 20, w: 20 },
            num_classes: 10,
            multi_label: false,
        }
    }

    pub fn validate(&self, s: &BimodalSample) -> Result<()> {
        if s.modality1.len() != self.modality1.len() {
            return Err(Error::InvalidArgument(format!(
                "sample {}: modality 1 has {} values, expected {}",
                s.id,
                s.modality1.len(),
                self.modality1.len()
            )));
        }
        if let Some(m2) = &s.modality2 {
            if m2.len() != self.modality2.len() {
                return Err(Error::InvalidArgument(format!(
                    "sample {}: modality 2 has {} values, expected {}",
                    s.id,
                    m2.len(),
                    self.modality2.len()
                )));
            }
        }
        let ok = match &s.label {
            Label::Class(c) => !self.multi_label && *c < self.num_classes,
            Label::Multi(bits) => self.multi_label && bits.len() == self.num_classes,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "sample {}: label {:?} outside the declared {} classes",
                s.id, s.label, self.num_classes
            )));
        }
        Ok(())
    }
}

/// A collection of samples sharing one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct BimodalDataset {
    pub schema: Schema,
    pub samples: Vec<BimodalSample>,
}

impl BimodalDataset {
    pub fn new(schema: Schema, samples: Vec<BimodalSample>) -> Result<Self> {
        for s in &samples {
            schema.validate(s)?;
        }
        Ok(Self { schema, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// A split whose second modality may have been removed from some samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedDataset {
    pub schema: Schema,
    pub samples: Vec<BimodalSample>,
    pub eta: f64,
    pub seed: u64,
    pub split: Split,
}

impl MaskedDataset {
    /// A split with every modality present.
    pub fn unmasked(data: BimodalDataset, split: Split) -> Self {
        Self { schema: data.schema, samples: data.samples, eta: 1.0, seed: 0, split }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of modality-complete samples.
    pub fn complete_indices(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].is_complete()).collect()
    }

    /// Indices of samples missing modality 2.
    pub fn incomplete_indices(&self) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| !self.samples[i].is_complete()).collect()
    }

    pub fn complete_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_complete()).count()
    }

    pub fn is_fully_complete(&self) -> bool {
        self.samples.iter().all(|s| s.is_complete())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchLabels {
    Classes(Vec<usize>),
    /// Row-major `batch × classes` of 0/1 targets.
    Multi {
        targets: Vec<f64>,
        classes: usize,
    },
}

impl BatchLabels {
    pub fn len(&self) -> usize {
        match self {
            BatchLabels::Classes(c) => c.len(),
            BatchLabels::Multi { targets, classes } => targets.len() / classes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stacked inputs for a group of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub modality1: Tensor,
    /// Present only when every sample in the batch carries modality 2.
    pub modality2: Option<Tensor>,
    pub labels: BatchLabels,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stacks `samples`. Modality 2 is included when `with_modality2` is set;
    /// it is then an error for any sample to lack it.
    pub fn from_samples(schema: &Schema, samples: &[&BimodalSample], with_modality2: bool) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("cannot build an empty batch".into()));
        }
        let b = samples.len();
        let m1: Vec<f64> = samples.iter().flat_map(|s| s.modality1.iter().copied()).collect();
        let modality1 = Tensor::new(schema.modality1.batch_shape(b), m1)?;
        let modality2 = if with_modality2 {
            let mut m2 = Vec::with_capacity(b * schema.modality2.len());
            for s in samples {
                let v = s.modality2.as_ref().ok_or_else(|| Error::MissingModality(format!("sample {} has no modality 2", s.id)))?;
                m2.extend_from_slice(v);
            }
            Some(Tensor::new(schema.modality2.batch_shape(b), m2)?)
        } else {
            None
        };
        let labels = if schema.multi_label {
            let mut targets = Vec::with_capacity(b * schema.num_classes);
            for s in samples {
                match &s.label {
                    Label::Multi(bits) => targets.extend(bits.iter().map(|&x| if x { 1.0 } else { 0.0 })),
                    Label::Class(_) => return Err(Error::InvalidArgument("single-class label in multi-label batch".into())),
                }
            }
            BatchLabels::Multi { targets, classes: schema.num_classes }
        } else {
            let mut classes = Vec::with_capacity(b);
            for s in samples {
                match &s.label {
                    Label::Class(c) => classes.push(*c),
                    Label::Multi(_) => return Err(Error::InvalidArgument("multi-label sample in single-class batch".into())),
                }
            }
            BatchLabels::Classes(classes)
        };
        Ok(Self { modality1, modality2, labels })
    }
}
