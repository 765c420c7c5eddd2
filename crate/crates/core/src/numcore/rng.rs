//! Seeded SplitMix64 stream used for every random draw in the crate.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;

pub type AdeRng = SplitMix64;

pub fn seeded(seed: u64) -> AdeRng {
    SplitMix64::seed_from_u64(seed)
}

/// Derives an independent stream for a named sub-task (e.g. dropout, init).
pub fn substream(seed: u64, tag: u64) -> AdeRng {
    // golden-ratio increment keeps tags far apart in the SplitMix sequence
    seeded(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn normal(rng: &mut AdeRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut AdeRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

pub fn uniform_vec(rng: &mut AdeRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}
