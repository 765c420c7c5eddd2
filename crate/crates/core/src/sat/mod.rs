//! Segment-aware transformer: one masked attention block over the anchor
//! sequence, attention pooling and the classifier head.

mod block;
mod params;

pub use block::{attention, sat_forward};
pub(crate) use block::{sat_row_backward, sat_row_forward, SatCache};
pub use params::{sat_param_count, HeadParams, LayerNormParams, PoolerParams, SatParams};
pub(crate) use params::check_heads;

use serde::{Deserialize, Serialize};

use crate::error::{AdeError, Result};
use crate::numcore::{axpy, dot, masked_softmax, masked_softmax_backward, Tensor};

/// Attention pooling of one sequence: returns the pooled vector and weights.
pub(crate) fn pool_row(x: &[f64], len: usize, valid: &[bool], pp: &PoolerParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = pp.score_w.len();
    let scores: Vec<f64> = (0..len)
        .map(|t| if valid[t] { dot(&pp.score_w, &x[t * d..(t + 1) * d]) + pp.score_b } else { 0.0 })
        .collect();
    let weights = masked_softmax(&scores, valid)?;
    let mut pooled = vec![0.0; d];
    for t in (0..len).filter(|&t| valid[t]) {
        axpy(weights[t], &x[t * d..(t + 1) * d], &mut pooled);
    }
    Ok((pooled, weights))
}

/// Returns `dx` for one pooled sequence and accumulates pooler gradients.
pub(crate) fn pool_row_backward(
    x: &[f64],
    len: usize,
    valid: &[bool],
    weights: &[f64],
    pp: &PoolerParams,
    dpooled: &[f64],
    grads: &mut PoolerParams,
) -> Vec<f64> {
    let d = dpooled.len();
    let mut dx = vec![0.0; len * d];
    let dweights: Vec<f64> = (0..len)
        .map(|t| if valid[t] { dot(dpooled, &x[t * d..(t + 1) * d]) } else { 0.0 })
        .collect();
    let dscores = masked_softmax_backward(weights, &dweights);
    for t in (0..len).filter(|&t| valid[t]) {
        let row = &mut dx[t * d..(t + 1) * d];
        axpy(weights[t], dpooled, row);
        axpy(dscores[t], &pp.score_w, row);
        axpy(dscores[t], &x[t * d..(t + 1) * d], &mut grads.score_w);
        grads.score_b += dscores[t];
    }
    dx
}

pub(crate) fn classify_row(p: &[f64], h: &HeadParams) -> Vec<f64> {
    (0..h.classes()).map(|c| dot(h.w.row(c), p) + h.b[c]).collect()
}

/// Returns `d pooled` and accumulates head gradients.
pub(crate) fn classify_row_backward(p: &[f64], h: &HeadParams, dlogits: &[f64], grads: &mut HeadParams) -> Vec<f64> {
    let mut dp = vec![0.0; p.len()];
    for (c, &g) in dlogits.iter().enumerate() {
        axpy(g, p, grads.w.row_mut(c));
        grads.b[c] += g;
        axpy(g, h.w.row(c), &mut dp);
    }
    dp
}

/// Attention pooling: `Σ_t softmax_valid(w·x_t + b)_t · x_t` per batch row.
pub fn pool(x: &Tensor, mask: &[bool], pp: &PoolerParams) -> Result<Tensor> {
    let d = pp.score_w.len();
    if x.shape().len() != 3 || x.shape()[2] != d {
        return Err(AdeError::shape(format!("pool expects B×T×{d}, got {:?}", x.shape())));
    }
    let (b, t) = (x.shape()[0], x.shape()[1]);
    if mask.len() != b * t {
        return Err(AdeError::shape("pool mask size mismatch"));
    }
    let mut out = Vec::with_capacity(b * d);
    for row in 0..b {
        let xs = &x.data()[row * t * d..(row + 1) * t * d];
        out.extend(pool_row(xs, t, &mask[row * t..(row + 1) * t], pp)?.0);
    }
    Tensor::new(vec![b, d], out)
}

/// Affine classifier `W·p + b` applied to every pooled row.
pub fn classify(pooled: &Tensor, h: &HeadParams) -> Result<Tensor> {
    let d = h.w.cols();
    if pooled.shape().len() != 2 || pooled.cols() != d {
        return Err(AdeError::shape(format!("classify expects B×{d}, got {:?}", pooled.shape())));
    }
    let mut out = Vec::with_capacity(pooled.rows() * h.classes());
    for row in 0..pooled.rows() {
        out.extend(classify_row(pooled.row(row), h));
    }
    Tensor::new(vec![pooled.rows(), h.classes()], out)
}

/// Shape of a model for parameter accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamConfig {
    pub dim: usize,
    pub heads: usize,
    pub classes: usize,
    pub num_anchors: usize,
    /// Σ k_i; the number of trainable anchor weights β.
    pub codebook_entries: usize,
    pub trainable_embeddings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub component: String,
    pub params: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub rows: Vec<ParamRow>,
    pub total_trainable: usize,
    pub total_frozen: usize,
}

impl ParamTable {
    pub fn get(&self, component: &str) -> Option<usize> {
        self.rows.iter().find(|r| r.component == component).map(|r| r.params)
    }
}

pub const ROW_SAT: &str = "Contextualizer (SAT, 1L)";
pub const ROW_LAYER_NORM: &str = "LayerNorm";
pub const ROW_POOLER: &str = "Pooler";
pub const ROW_HEAD: &str = "Classifier head";
pub const ROW_ANCHORS: &str = "Anchor embeddings";
pub const ROW_WEIGHTS: &str = "Anchor weights";

/// Per-component parameter counts, split by trainability.
pub fn count_params(cfg: &ParamConfig) -> Result<ParamTable> {
    check_heads(cfg.dim, cfg.heads)?;
    let d = cfg.dim;
    let mut rows = vec![
        ParamRow { component: ROW_SAT.into(), params: sat_param_count(d), trainable: true },
        ParamRow { component: ROW_LAYER_NORM.into(), params: 2 * d, trainable: true },
        ParamRow { component: ROW_POOLER.into(), params: d + 1, trainable: true },
        ParamRow { component: ROW_HEAD.into(), params: cfg.classes * (d + 1), trainable: true },
    ];
    if cfg.num_anchors > 0 {
        rows.push(ParamRow {
            component: ROW_ANCHORS.into(),
            params: cfg.num_anchors * d,
            trainable: cfg.trainable_embeddings,
        });
    }
    if cfg.codebook_entries > 0 {
        rows.push(ParamRow {
            component: ROW_WEIGHTS.into(),
            params: cfg.codebook_entries,
            trainable: cfg.trainable_embeddings,
        });
    }
    let total_trainable = rows.iter().filter(|r| r.trainable).map(|r| r.params).sum();
    let total_frozen = rows.iter().filter(|r| !r.trainable).map(|r| r.params).sum();
    Ok(ParamTable { rows, total_trainable, total_frozen })
}

/// Parameters of a dense `N × d` word-embedding table.
pub fn dense_embedding_params(vocab: usize, dim: usize) -> usize {
    vocab * dim
}
