use super::{BimodalDataset, BimodalSample, Label, MaskedDataset, Schema, Split};
use crate::error::{Error, Result};
use crate::random::{self, streams};
use rand::seq::SliceRandom;

/// Pairs every image with an audio feature of the same class: the k-th image
/// of class c (in input order) takes the k-th audio map of class c.
pub fn pair_by_class(
    schema: Schema,
    images: Vec<Vec<f64>>,
    image_labels: &[u8],
    audio: Vec<Vec<f64>>,
    audio_labels: &[u8],
) -> Result<BimodalDataset> {
    if images.len() != image_labels.len() || audio.len() != audio_labels.len() {
        return Err(Error::InvalidArgument("each modality needs one label per item".into()));
    }
    let classes = schema.num_classes;
    let mut per_class_audio: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in audio_labels.iter().enumerate() {
        per_class_audio
            .get_mut(l as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("audio label {l} outside {classes} classes")))?
            .push(i);
    }
    let mut image_counts = vec![0usize; classes];
    for &l in image_labels {
        *image_counts.get_mut(l as usize).ok_or_else(|| Error::InvalidArgument(format!("image label {l} outside {classes} classes")))? += 1;
    }
    for c in 0..classes {
        if image_counts[c] != per_class_audio[c].len() {
            return Err(Error::InvalidArgument(format!(
                "class {c}: {} images but {} audio clips",
                image_counts[c],
                per_class_audio[c].len()
            )));
        }
    }
    let mut audio: Vec<Option<Vec<f64>>> = audio.into_iter().map(Some).collect();
    let mut taken = vec![0usize; classes];
    let mut samples = Vec::with_capacity(images.len());
    for (id, (img, &l)) in images.into_iter().zip(image_labels).enumerate() {
        let c = l as usize;
        let a = per_class_audio[c][taken[c]];
        taken[c] += 1;
        samples.push(BimodalSample { id, modality1: img, modality2: audio[a].take(), label: Label::Class(c) });
    }
    BimodalDataset::new(schema, samples)
}

/// Seeded shuffle followed by a `train_fraction` / rest split. The train
/// split holds `round(train_fraction * n)` samples.
pub fn split_dataset(data: BimodalDataset, train_fraction: f64, seed: u64) -> Result<(MaskedDataset, MaskedDataset)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let n = data.samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut random::rng(seed, streams::SPLIT));
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut slots: Vec<Option<BimodalSample>> = data.samples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| idx.iter().map(|&i| slots[i].take().expect("index used once")).collect::<Vec<_>>();
    let train = take(&order[..n_train]);
    let validation = take(&order[n_train..]);
    let mk = |samples, split| MaskedDataset { schema: data.schema, samples, eta: 1.0, seed, split };
    Ok((mk(train, Split::Train), mk(validation, Split::Validation)))
}

/// [`pair_by_class`] followed by [`split_dataset`].
pub fn pair_and_split(
    schema: Schema,
    images: Vec<Vec<f64>>,
    image_labels: &[u8],
    audio: Vec<Vec<f64>>,
    audio_labels: &[u8],
    train_fraction: f64,
    seed: u64,
) -> Result<(MaskedDataset, MaskedDataset)> {
    let paired = pair_by_class(schema, images, image_labels, audio, audio_labels)?;
    split_dataset(paired, train_fraction, seed)
}

/// `round(eta * n)` with halves rounded up.
pub fn complete_count(eta: f64, n: usize) -> usize {
    // The epsilon absorbs representation error, e.g. 0.05 * 1050 = 52.5.
    ((eta * n as f64) + 0.5 + 1e-9).floor().min(n as f64) as usize
}

/// Keeps modality 2 on exactly `round(eta * n)` seeded-uniformly chosen
/// samples of a training split and removes it from the rest.
pub fn mask_modality(train: &MaskedDataset, eta: f64, seed: u64) -> Result<MaskedDataset> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("modality ratio {eta} outside [0, 1]")));
    }
    if train.split != Split::Train {
        return Err(Error::InvalidArgument("only the training split can be masked".into()));
    }
    if !train.is_fully_complete() {
        return Err(Error::InvalidArgument("mask_modality expects an unmasked split".into()));
    }
    let n = train.samples.len();
    let keep = complete_count(eta, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut random::rng(seed, streams::MASK));
    let mut present = vec![false; n];
    for &i in &order[..keep] {
        present[i] = true;
    }
    let samples = train
        .samples
        .iter()
        .zip(&present)
        .map(|(s, &p)| BimodalSample { modality2: if p { s.modality2.clone() } else { None }, ..s.clone() })
        .collect();
    Ok(MaskedDataset { schema: train.schema, samples, eta, seed, split: Split::Train })
}
