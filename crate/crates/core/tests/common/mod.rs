#![allow(dead_code)]

use ade::codebook::{AnchorMatrix, SparseCodebook, TokenBatch};
use ade::numcore::rng::{normal_vec, seeded, AdeRng};
use ade::numcore::Tensor;
use ade::pipeline::{AdeModel, ModelConfig};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random codebook: every word gets between 1 and `max_k` distinct sorted anchors.
pub fn random_codebook(rng: &mut AdeRng, n: usize, k: usize, max_k: usize) -> SparseCodebook {
    let entries = (0..n)
        .map(|_| {
            let card = rng.gen_range(1..=max_k.min(k));
            let mut all: Vec<usize> = (0..k).collect();
            all.shuffle(rng);
            let mut idx = all[..card].to_vec();
            idx.sort_unstable();
            let w = idx.iter().map(|_| rng.gen_range(0.1..1.5)).collect();
            (idx, w)
        })
        .collect();
    SparseCodebook::from_entries(k, entries).unwrap()
}

pub fn random_anchors(rng: &mut AdeRng, k: usize, d: usize) -> AnchorMatrix {
    AnchorMatrix::new(Tensor::new(vec![k, d], normal_vec(rng, k * d, 1.0)).unwrap()).unwrap()
}

/// Tiny model (N=10, K=4, d=8, two heads, three classes) with every
/// parameter, including norm gain/bias and pooler, drawn at random.
pub fn tiny_model(seed: u64, max_k: usize) -> AdeModel {
    let mut rng = seeded(seed.wrapping_add(1000));
    let (n, k, d) = (10, 4, 8);
    let cb = random_codebook(&mut rng, n, k, max_k);
    let anchors = random_anchors(&mut rng, k, d);
    let cfg = ModelConfig { dim: d, heads: 2, classes: 3, dropout: 0.25, max_positions: 32, ..Default::default() };
    let mut m = AdeModel::new(cfg, cb, anchors, seed).unwrap();
    let mut flat = normal_vec(&mut rng, m.num_params(), 0.5);
    let off = m.embedding_offset();
    let keep = m.flat_params();
    flat[off..].copy_from_slice(&keep[off..]);
    m.set_flat_params(&flat).unwrap();
    m
}

/// Random batch over words `2..n`, each row with at least one valid token;
/// padding may be interior.
pub fn random_batch(rng: &mut AdeRng, n: usize, batch: usize, len: usize) -> TokenBatch {
    let mut ids = Vec::new();
    let mut mask = Vec::new();
    for _ in 0..batch {
        let keep = rng.gen_range(1..=len);
        let mut row: Vec<bool> = (0..len).map(|i| i < keep).collect();
        if rng.gen_bool(0.3) {
            row.shuffle(rng);
        }
        for &m in &row {
            ids.push(if m { rng.gen_range(2..n) } else { 0 });
            mask.push(m);
        }
    }
    TokenBatch::new(ids, mask, batch, len).unwrap()
}
