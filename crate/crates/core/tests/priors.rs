use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smil_core::dataset::{mask_modality, pair_and_split, Label, MaskedDataset, Schema};
use smil_core::par::Execution;
use smil_core::priors::{build_priors, kmeans, pca, pca_priors, ModalityPriors, PriorMethod, PriorSpace};

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn mean(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64).collect()
}

#[test]
fn single_cluster_is_the_mean() {
    let pts = random_points(40, 3, 1);
    let km = kmeans(&pts, 1, 50, 0, Execution::Sequential).unwrap();
    let m = mean(&pts);
    for (a, b) in km.centroids[0].iter().zip(&m) {
        assert!((a - b).abs() < 1e-12);
    }
    let total_var: f64 = pts.iter().map(|p| p.iter().zip(&m).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sum();
    assert!((km.inertia - total_var).abs() < 1e-9);
}

/// Minimum-inertia 2-partition by exhaustive search.
fn best_two_partition(pts: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = pts.len();
    let mut best = (f64::INFINITY, vec![], vec![]);
    for mask in 1..(1u32 << n) - 1 {
        let (a, b): (Vec<_>, Vec<_>) = (0..n).partition(|&i| mask & (1 << i) != 0);
        let ga: Vec<Vec<f64>> = a.iter().map(|&i| pts[i].clone()).collect();
        let gb: Vec<Vec<f64>> = b.iter().map(|&i| pts[i].clone()).collect();
        let (ma, mb) = (mean(&ga), mean(&gb));
        let cost = |g: &[Vec<f64>], m: &[f64]| g.iter().map(|p| p.iter().zip(m).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sum::<f64>();
        let c = cost(&ga, &ma) + cost(&gb, &mb);
        if c < best.0 {
            best = (c, ma, mb);
        }
    }
    (best.1, best.2)
}

#[test]
fn two_triplets_match_brute_force() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 0.9], vec![10.0, 10.0], vec![11.0, 9.5], vec![10.4, 11.2]];
    let (a, b) = best_two_partition(&pts);
    for seed in 0..10 {
        let km = kmeans(&pts, 2, 100, seed, Execution::Sequential).unwrap();
        let mut got = km.centroids.clone();
        got.sort_by(|x, y| x[0].total_cmp(&y[0]));
        let mut want = vec![a.clone(), b.clone()];
        want.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for (g, w) in got.iter().zip(&want) {
            for (x, y) in g.iter().zip(w) {
                assert!((x - y).abs() < 1e-12, "seed {seed}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn k_equals_n_has_zero_inertia() {
    let pts = random_points(12, 4, 2);
    let km = kmeans(&pts, 12, 50, 3, Execution::Sequential).unwrap();
    assert_eq!(km.inertia, 0.0);
    for c in &km.centroids {
        assert!(pts.contains(c));
    }
    assert!(kmeans(&pts, 13, 50, 3, Execution::Sequential).is_err());
}

#[test]
fn inertia_never_increases() {
    for seed in 0..5 {
        let pts = random_points(300, 5, 10 + seed);
        let km = kmeans(&pts, 8, 100, seed, Execution::Sequential).unwrap();
        assert!(km.history.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", km.history);
    }
}

#[test]
fn duplicate_points_still_give_k_centroids() {
    let mut pts = vec![vec![1.0, 1.0]; 10];
    pts.push(vec![5.0, 5.0]);
    pts.push(vec![9.0, 0.0]);
    let km = kmeans(&pts, 3, 50, 0, Execution::Sequential).unwrap();
    assert_eq!(km.inertia, 0.0);
}

#[test]
fn parallel_and_sequential_agree() {
    let pts = random_points(500, 6, 4);
    let a = kmeans(&pts, 7, 100, 9, Execution::Sequential).unwrap();
    let b = kmeans(&pts, 7, 100, 9, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pca_finds_an_embedded_line() {
    let dir = [0.2, -0.5, 0.7, 0.1, 0.3];
    let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| {
            let t: f64 = rng.random_range(-3.0..3.0);
            dir.iter().enumerate().map(|(j, v)| 1.0 + j as f64 + t * v).collect()
        })
        .collect();
    let p = pca(&pts, 1).unwrap();
    let cos: f64 = p.components[0].iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / norm;
    assert!(cos.abs() > 1.0 - 1e-6, "cos {cos}");
}

#[test]
fn pca_components_are_ordered_orthonormal_and_complete() {
    let pts = random_points(50, 5, 6);
    let p = pca(&pts, 5).unwrap();
    assert!(p.variances.windows(2).all(|w| w[0] >= w[1]));
    for i in 0..5 {
        for j in 0..5 {
            let dot: f64 = p.components[i].iter().zip(&p.components[j]).map(|(a, b)| a * b).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
    for x in &pts {
        let r = p.reconstruct(x);
        assert!(x.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-8));
    }
    assert!(pca(&pts[..1], 1).is_err());
    assert!(pca(&pts, 6).is_err());

    let priors = pca_priors(&pts, 3, PriorSpace::Input).unwrap();
    assert_eq!((priors.k(), priors.dim()), (3, 5));
    for (v, (c, var)) in priors.vectors.iter().zip(p.components.iter().zip(&p.variances)) {
        for j in 0..5 {
            assert!((v[j] - p.mean[j] - var.sqrt() * c[j]).abs() < 1e-12);
        }
    }
}

fn avmnist_like(n: usize) -> MaskedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let images = (0..n).map(|_| vec![0.0; 784]).collect();
    let audio = (0..n).map(|_| (0..400).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    pair_and_split(Schema::avmnist(), images, &labels, audio, &labels, 0.7, 1).unwrap().0
}

#[test]
fn priors_come_only_from_complete_samples() {
    let train = avmnist_like(1500);
    let masked = mask_modality(&train, 0.2, 3).unwrap();
    let priors = build_priors(&masked, 16, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Parallel).unwrap();
    assert_eq!(priors.source_count, 210);
    assert_eq!((priors.k(), priors.dim()), (16, 400));
    let again = build_priors(&masked, 16, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Parallel).unwrap();
    assert_eq!(priors, again);

    // Editing incomplete samples changes nothing.
    let mut edited = masked.clone();
    for s in edited.samples.iter_mut().filter(|s| s.modality2.is_none()) {
        s.modality1[0] = 0.9;
        s.label = Label::Class(3);
    }
    let edited_priors = build_priors(&edited, 16, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Parallel).unwrap();
    assert_eq!(priors, edited_priors);

    let one = build_priors(&masked, 1, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Parallel).unwrap();
    let complete: Vec<Vec<f64>> = masked.samples.iter().filter_map(|s| s.modality2.clone()).collect();
    for (a, b) in one.vectors[0].iter().zip(mean(&complete)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn too_few_complete_samples_is_an_error() {
    let train = avmnist_like(100);
    let masked = mask_modality(&train, 0.1, 3).unwrap();
    assert!(build_priors(&masked, 16, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Sequential).is_err());
    let none = mask_modality(&train, 0.0, 3).unwrap();
    assert!(build_priors(&none, 1, PriorMethod::KMeans, PriorSpace::Input, None, 0, Execution::Sequential).is_err());
}

#[test]
fn embedding_space_requires_an_encoder() {
    let train = avmnist_like(200);
    assert!(build_priors(&train, 2, PriorMethod::KMeans, PriorSpace::Embedding, None, 0, Execution::Sequential).is_err());
    let enc = |xs: &[Vec<f64>]| Ok(xs.iter().map(|x| x[..3].to_vec()).collect());
    let p = build_priors(&train, 2, PriorMethod::KMeans, PriorSpace::Embedding, Some(&enc), 0, Execution::Sequential).unwrap();
    assert_eq!((p.dim(), p.space), (3, PriorSpace::Embedding));
    assert!(build_priors(&train, 2, PriorMethod::KMeans, PriorSpace::Input, Some(&enc), 0, Execution::Sequential).is_err());
}

#[test]
fn priors_file_round_trip() {
    let p = ModalityPriors::new(random_points(4, 7, 1), PriorSpace::Embedding, 0).unwrap();
    let bytes = p.encode();
    assert_eq!(&bytes[..5], b"SMILP");
    assert_eq!(bytes.len(), 14 + 4 * 7 * 8);
    assert_eq!(ModalityPriors::decode(&bytes).unwrap(), p);
    assert!(ModalityPriors::decode(&bytes[..bytes.len() - 1]).is_err());
}
