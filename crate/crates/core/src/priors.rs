//! Modality priors: K representative second-modality vectors clustered from
//! the modality-complete training samples.

use crate::dataset::MaskedDataset;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::random::{self, streams};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorSpace {
    /// Flattened raw modality-2 inputs.
    Input,
    /// Encoder features of modality 2.
    Embedding,
}

impl PriorSpace {
    pub fn name(self) -> &'static str {
        match self {
            PriorSpace::Input => "input",
            PriorSpace::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "input" => Some(PriorSpace::Input),
            "embedding" => Some(PriorSpace::Embedding),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMethod {
    KMeans,
    Pca,
}

impl PriorMethod {
    pub fn name(self) -> &'static str {
        match self {
            PriorMethod::KMeans => "kmeans",
            PriorMethod::Pca => "pca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kmeans" => Some(PriorMethod::KMeans),
            "pca" => Some(PriorMethod::Pca),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityPriors {
    /// `k` rows of length `dim`.
    pub vectors: Vec<Vec<f64>>,
    pub space: PriorSpace,
    pub source_count: usize,
}

impl ModalityPriors {
    pub fn new(vectors: Vec<Vec<f64>>, space: PriorSpace, source_count: usize) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if vectors.is_empty() || dim == 0 {
            return Err(Error::InvalidArgument("priors need k >= 1 non-empty vectors".into()));
        }
        if vectors.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidArgument("prior vectors must be finite and equally sized".into()));
        }
        Ok(Self { vectors, space, source_count })
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    /// Row-major `k × dim` copy.
    pub fn flat(&self) -> Vec<f64> {
        self.vectors.concat()
    }

    /// `Σ_k ℳ_k`.
    pub fn sum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for v in &self.vectors {
            out.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = b"SMILP".to_vec();
        out.extend((self.k() as u32).to_le_bytes());
        out.extend((self.dim() as u32).to_le_bytes());
        out.push(match self.space {
            PriorSpace::Input => 0,
            PriorSpace::Embedding => 1,
        });
        for v in self.vectors.iter().flatten() {
            out.extend(v.to_le_bytes());
        }
        out
    }

    /// Decodes [`ModalityPriors::encode`] output. The source count is not
    /// stored and comes back as 0.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 || &bytes[..5] != b"SMILP" {
            return Err(Error::format("priors", 0, "missing SMILP header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (k, d) = (u32_at(5), u32_at(9));
        let space = match bytes[13] {
            0 => PriorSpace::Input,
            1 => PriorSpace::Embedding,
            t => return Err(Error::format("priors", 13, format!("unknown space tag {t}"))),
        };
        let need = 14 + k * d * 8;
        if bytes.len() != need {
            return Err(Error::format("priors", bytes.len().min(need) as u64, format!("expected {need} bytes, found {}", bytes.len())));
        }
        let vals: Vec<f64> = bytes[14..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(vals.chunks(d.max(1)).map(<[f64]>::to_vec).collect(), space, 0)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.encode())?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

/// Nearest centroid for every point (ties go to the lower index) and the
/// squared distance to it.
pub fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], exec: Execution) -> Vec<(usize, f64)> {
    par::map(exec, points, |p| {
        let mut best = (0, f64::INFINITY);
        for (c, cent) in centroids.iter().enumerate() {
            let d = sq_dist(p, cent);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    })
}

/// Lloyd's algorithm with k-means++ seeding. Stops after `max_iters`
/// iterations or once assignments no longer change.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, seed: u64, exec: Execution) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::InsufficientData(format!("k-means needs at least k={k} points, found {n}")));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidArgument("points must share one dimension".into()));
    }
    let mut rng = random::rng(seed, streams::KMEANS);

    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // Guard against rounding landing on an already-covered point.
            if nearest[pick] == 0.0 {
                pick = (0..n).max_by(|&a, &b| nearest[a].total_cmp(&nearest[b])).unwrap();
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let assigned = assign(points, &centroids, exec);
        let new: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let stable = new == assignments;
        assignments = new;
        if stable {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Re-seed at the point farthest from its own centroid.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| assigned[a].1.total_cmp(&assigned[b].1).then(b.cmp(&a)))
                    .expect("n >= k leaves a free point");
                taken[far] = true;
                centroids[c] = points[far].clone();
            }
        }
        history.push(inertia_of(points, &centroids, &assignments));
    }
    let assignments: Vec<usize> = assign(points, &centroids, exec).into_iter().map(|a| a.0).collect();
    let inertia = inertia_of(points, &centroids, &assignments);
    Ok(KMeans { centroids, assignments, inertia, history })
}

fn inertia_of(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points.iter().zip(assignments).map(|(p, &c)| sq_dist(p, &centroids[c])).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal directions, by descending variance.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component (population normalization).
    pub variances: Vec<f64>,
}

impl Pca {
    /// Projects onto the components and maps back.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = self.mean.clone();
        for c in &self.components {
            let coef: f64 = centered.iter().zip(c).map(|(a, b)| a * b).sum();
            out.iter_mut().zip(c).for_each(|(o, v)| *o += coef * v);
        }
        out
    }
}

/// Top-`k` principal components of `points`.
pub fn pca(points: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 points, found {n}")));
    }
    let d = points[0].len();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!("PCA with k={k} on {n} points of dimension {d}")));
    }
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let components = order[..k].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    let variances = order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    Ok(Pca { mean, components, variances })
}

/// Priors `mean + sqrt(variance_i) * direction_i` for the top-`k` components.
pub fn pca_priors(points: &[Vec<f64>], k: usize, space: PriorSpace) -> Result<ModalityPriors> {
    let p = pca(points, k)?;
    let vectors =
        p.components.iter().zip(&p.variances).map(|(c, v)| p.mean.iter().zip(c).map(|(m, x)| m + v.sqrt() * x).collect()).collect();
    ModalityPriors::new(vectors, space, points.len())
}

pub const KMEANS_MAX_ITERS: usize = 100;

/// Maps raw modality-2 vectors to embedding-space features.
pub type EncodeFn<'a> = dyn Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>> + 'a;

/// Clusters the second modality of the complete samples in `data`.
///
/// For [`PriorSpace::Embedding`] the `encoder` maps raw modality-2 vectors to
/// features; it must be `None` for [`PriorSpace::Input`].
pub fn build_priors(
    data: &MaskedDataset,
    k: usize,
    method: PriorMethod,
    space: PriorSpace,
    encoder: Option<&EncodeFn>,
    seed: u64,
    exec: Execution,
) -> Result<ModalityPriors> {
    let raw: Vec<Vec<f64>> = data.samples.iter().filter_map(|s| s.modality2.clone()).collect();
    if raw.len() < k.max(1) {
        return Err(Error::InsufficientData(format!("{} modality-complete samples cannot support {k} priors", raw.len())));
    }
    let points = match (space, encoder) {
        (PriorSpace::Input, None) => raw,
        (PriorSpace::Embedding, Some(enc)) => enc(&raw)?,
        (PriorSpace::Input, Some(_)) => return Err(Error::InvalidArgument("input-space priors take no encoder".into())),
        (PriorSpace::Embedding, None) => return Err(Error::InvalidArgument("embedding-space priors need an encoder".into())),
    };
    match method {
        PriorMethod::KMeans => {
            let km = kmeans(&points, k, KMEANS_MAX_ITERS, seed, exec)?;
            ModalityPriors::new(km.centroids, space, points.len())
        }
        PriorMethod::Pca => pca_priors(&points, k, space),
    }
}
