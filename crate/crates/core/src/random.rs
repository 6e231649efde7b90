//! Seeded random streams. Every consumer derives its generator from a
//! `(seed, stream)` pair so independent uses of one seed never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const MASK: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCHES: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const KMEANS: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const CORPUS: u64 = 8;
    pub const BATCHES_COMPLETE: u64 = 9;
    pub const EVAL: u64 = 10;
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
