use smil_core::dataset::{
    complete_count, encode_idx_images, encode_idx_labels, generate_avmnist_corpus, load_idx_images, load_prepared, mask_modality,
    pair_and_split, prepare_dataset, synth_bimodal, BimodalDataset, CorpusSpec, Label, Manifest, MaskedDataset, Schema, Split, SynthSpec,
};
use smil_core::par::Execution;
use smil_core::signal::MfccConfig;

/// Images with labels, then audio with labels.
type Fake = (Vec<Vec<f64>>, Vec<u8>, Vec<Vec<f64>>, Vec<u8>);

fn fake_avmnist(n: usize) -> Fake {
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let images = (0..n).map(|i| vec![i as f64 / n as f64; 784]).collect();
    // Audio in reverse order so pairing has to search by class.
    let audio_labels: Vec<u8> = labels.iter().rev().copied().collect();
    let audio = (0..n).map(|i| vec![-(i as f64); 400]).collect();
    (images, labels, audio, audio_labels)
}

fn split_1500(seed: u64) -> (MaskedDataset, MaskedDataset) {
    let (i, l, a, al) = fake_avmnist(1500);
    pair_and_split(Schema::avmnist(), i, &l, a, &al, 0.7, seed).unwrap()
}

#[test]
fn split_counts_follow_the_fraction() {
    let (train, val) = split_1500(3);
    assert_eq!((train.len(), val.len()), (1050, 450));
    assert!(train.is_fully_complete() && val.is_fully_complete());
    let (i, l, a, al) = fake_avmnist(1500);
    let (train, val) = pair_and_split(Schema::avmnist(), i, &l, a, &al, 1.0, 3).unwrap();
    assert_eq!((train.len(), val.len()), (1500, 0));
}

#[test]
fn pairing_matches_class_and_per_class_index() {
    let (i, l, a, al) = fake_avmnist(40);
    let (train, val) = pair_and_split(Schema::avmnist(), i, &l, a, &al, 0.5, 1).unwrap();
    for s in train.samples.iter().chain(&val.samples) {
        let Label::Class(c) = s.label else { panic!() };
        let k = s.id / 10;
        let audio_index = (0..40).filter(|&j| al[j] as usize == c).nth(k).unwrap();
        assert_eq!(s.modality2.as_ref().unwrap()[0], -(audio_index as f64));
    }
}

#[test]
fn class_count_mismatch_is_rejected() {
    let (i, l, a, mut al) = fake_avmnist(20);
    al[0] = (al[0] + 1) % 10;
    assert!(pair_and_split(Schema::avmnist(), i, &l, a, &al, 0.7, 0).is_err());
}

#[test]
fn splits_are_deterministic() {
    assert_eq!(split_1500(11), split_1500(11));
    assert_ne!(split_1500(11).0.samples[0].id, split_1500(12).0.samples[0].id);
}

#[test]
fn masking_counts() {
    let (train, _) = split_1500(0);
    let cases = [(1.0, 1050, 0), (0.2, 210, 840), (0.05, 53, 997), (0.0, 0, 1050)];
    for (eta, f, m) in cases {
        let masked = mask_modality(&train, eta, 5).unwrap();
        assert_eq!(masked.complete_indices().len(), f, "eta {eta}");
        assert_eq!(masked.incomplete_indices().len(), m, "eta {eta}");
    }
    assert_eq!(complete_count(0.05, 1050), 53);
    assert!(mask_modality(&train, 1.5, 0).is_err());
}

#[test]
fn complete_and_incomplete_partition_the_train_split() {
    let (train, val) = split_1500(0);
    for eta in [0.0, 0.05, 0.1, 0.2, 0.5, 0.9, 1.0] {
        let masked = mask_modality(&train, eta, 9).unwrap();
        let mut all: Vec<usize> = masked.complete_indices();
        all.extend(masked.incomplete_indices());
        all.sort_unstable();
        assert_eq!(all, (0..train.len()).collect::<Vec<_>>());
        // Modality 1 and labels are untouched; kept modality 2 is unchanged.
        for (a, b) in masked.samples.iter().zip(&train.samples) {
            assert_eq!((a.id, &a.modality1, &a.label), (b.id, &b.modality1, &b.label));
            if let Some(m2) = &a.modality2 {
                assert_eq!(Some(m2), b.modality2.as_ref());
            }
        }
    }
    assert!(mask_modality(&val, 0.5, 0).is_err());
    assert_eq!(mask_modality(&train, 0.3, 4).unwrap(), mask_modality(&train, 0.3, 4).unwrap());
}

#[test]
fn manifest_round_trip_is_lossless() {
    let (train, val) = split_1500(2);
    let masked = mask_modality(&train, 0.2, 8).unwrap();
    for ds in [&masked, &val] {
        let m = Manifest::of(ds);
        let back = Manifest::decode(&m.encode()).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.records.len(), ds.len());
    }
    let spec = SynthSpec::new(30, 4, 3, 3, 0.5, true, 1);
    let multi = MaskedDataset::unmasked(synth_bimodal(&spec).unwrap(), Split::Train);
    let multi = mask_modality(&multi, 0.4, 2).unwrap();
    let m = Manifest::of(&multi);
    assert_eq!(Manifest::decode(&m.encode()).unwrap(), m);
}

#[test]
fn idx_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let imgs: Vec<Vec<f64>> = (0..3).map(|i| (0..784).map(|p| ((p + i) % 256) as f64 / 255.0).collect()).collect();
    std::fs::write(dir.path().join("i"), encode_idx_images(28, 28, &imgs)).unwrap();
    std::fs::write(dir.path().join("l"), encode_idx_labels(&[1, 2, 3])).unwrap();
    let (back, labels) = load_idx_images(&dir.path().join("i"), &dir.path().join("l")).unwrap();
    assert_eq!(labels, vec![1, 2, 3]);
    assert_eq!(back.images, imgs);
    std::fs::write(dir.path().join("l"), encode_idx_labels(&[1, 2])).unwrap();
    assert!(load_idx_images(&dir.path().join("i"), &dir.path().join("l")).is_err());
}

fn centroids(ds: &BimodalDataset, view: impl Fn(usize) -> Vec<f64>, classes: usize) -> Vec<Vec<f64>> {
    let d = view(0).len();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (i, s) in ds.samples.iter().enumerate() {
        let Label::Class(c) = s.label else { unreachable!() };
        counts[c] += 1;
        sums[c].iter_mut().zip(view(i)).for_each(|(a, b)| *a += b);
    }
    sums.into_iter().zip(counts).map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect()).collect()
}

fn nearest_centroid_accuracy(ds: &BimodalDataset, view: impl Fn(usize) -> Vec<f64>, classes: usize) -> f64 {
    let cents = centroids(ds, &view, classes);
    let correct = ds
        .samples
        .iter()
        .enumerate()
        .filter(|(i, s)| {
            let x = view(*i);
            let best = (0..classes)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&cents[a]).map(|(p, q)| (p - q) * (p - q)).sum();
                    let db: f64 = x.iter().zip(&cents[b]).map(|(p, q)| (p - q) * (p - q)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            s.label == Label::Class(best)
        })
        .count();
    correct as f64 / ds.len() as f64
}

#[test]
fn noiseless_synthetic_views_are_separable() {
    let ds = synth_bimodal(&SynthSpec::new(400, 5, 6, 4, 0.0, false, 3)).unwrap();
    let v1 = |i: usize| ds.samples[i].modality1.clone();
    let v2 = |i: usize| ds.samples[i].modality2.clone().unwrap();
    assert_eq!(nearest_centroid_accuracy(&ds, v1, 5), 1.0);
    assert_eq!(nearest_centroid_accuracy(&ds, v2, 5), 1.0);
}

#[test]
fn both_views_beat_either_view() {
    let ds = synth_bimodal(&SynthSpec::new(10_000, 2, 4, 4, 1.0, false, 17)).unwrap();
    let v1 = |i: usize| ds.samples[i].modality1.clone();
    let v2 = |i: usize| ds.samples[i].modality2.clone().unwrap();
    let both = |i: usize| [v1(i), v2(i)].concat();
    let (a1, a2, ab) =
        (nearest_centroid_accuracy(&ds, v1, 2), nearest_centroid_accuracy(&ds, v2, 2), nearest_centroid_accuracy(&ds, both, 2));
    assert!(ab >= a1.max(a2) + 0.02, "single {a1} {a2}, both {ab}");
}

#[test]
fn synthetic_generation_is_seeded() {
    let spec = SynthSpec::new(50, 3, 5, 5, 0.7, true, 99);
    assert_eq!(synth_bimodal(&spec).unwrap(), synth_bimodal(&spec).unwrap());
    for s in synth_bimodal(&spec).unwrap().samples {
        let Label::Multi(bits) = s.label else { panic!() };
        assert!(bits.iter().any(|&b| b));
    }
}

#[test]
fn generated_corpus_prepares_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let spec = CorpusSpec { per_class: 4, ..CorpusSpec::default() };
    generate_avmnist_corpus(&raw, &spec, Execution::Parallel).unwrap();
    let out = dir.path().join("prepared");
    let prepared = prepare_dataset(
        &raw.join("images.idx3-ubyte"),
        &raw.join("labels.idx1-ubyte"),
        Some(&raw.join("audio")),
        None,
        &out,
        &MfccConfig::default(),
        0.7,
        5,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!((prepared.train.len(), prepared.validation.len()), (28, 12));
    let again = load_prepared(&out).unwrap();
    assert_eq!(again.train, prepared.train);
    assert_eq!(again.validation, prepared.validation);

    // Pairing keeps classes aligned and features are standardized on train.
    let mut per_coeff = vec![(0.0, 0usize); 20];
    for s in &again.train.samples {
        for (j, v) in s.modality2.as_ref().unwrap().iter().enumerate() {
            per_coeff[j % 20].0 += v;
            per_coeff[j % 20].1 += 1;
        }
    }
    for (sum, n) in per_coeff {
        assert!((sum / n as f64).abs() < 1e-9);
    }

    // The precomputed-feature bypass gives the same splits.
    let via_features = prepare_dataset(
        &out.join("images.idx"),
        &out.join("labels.idx"),
        None,
        Some(&out.join("audio.smilf")),
        &dir.path().join("bypass"),
        &MfccConfig::default(),
        0.7,
        5,
        Execution::Sequential,
    )
    .unwrap();
    let ids = |d: &MaskedDataset| d.samples.iter().map(|s| s.id).collect::<Vec<_>>();
    assert_eq!(ids(&via_features.train), ids(&prepared.train));
}
