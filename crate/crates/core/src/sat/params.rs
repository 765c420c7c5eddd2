use serde::{Deserialize, Serialize};

use crate::error::{AdeError, Result};
use crate::numcore::rng::{normal_vec, AdeRng};
use crate::numcore::Tensor;

/// Query/key/value/output projections of the single attention block.
///
/// Projections act on row vectors: `Q = X·Wq + bq`, with every `W` stored
/// `d_in × d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatParams {
    pub heads: usize,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub bq: Vec<f64>,
    pub bk: Vec<f64>,
    pub bv: Vec<f64>,
    pub bo: Vec<f64>,
}

impl SatParams {
    pub fn zeros(dim: usize, heads: usize) -> Result<Self> {
        check_heads(dim, heads)?;
        let sq = || Tensor::zeros(vec![dim, dim]);
        Ok(Self {
            heads,
            wq: sq(),
            wk: sq(),
            wv: sq(),
            wo: sq(),
            bq: vec![0.0; dim],
            bk: vec![0.0; dim],
            bv: vec![0.0; dim],
            bo: vec![0.0; dim],
        })
    }

    /// Gaussian weights with standard deviation `1/√d`, zero biases.
    pub fn init(dim: usize, heads: usize, rng: &mut AdeRng) -> Result<Self> {
        let mut p = Self::zeros(dim, heads)?;
        let scale = 1.0 / (dim as f64).sqrt();
        for w in [&mut p.wq, &mut p.wk, &mut p.wv, &mut p.wo] {
            w.data_mut().copy_from_slice(&normal_vec(rng, dim * dim, scale));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.bq.len()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn param_count(&self) -> usize {
        sat_param_count(self.dim())
    }

    /// Parameter tensors in a fixed order (used for flattening).
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            self.wq.data(),
            self.wk.data(),
            self.wv.data(),
            self.wo.data(),
            &self.bq,
            &self.bk,
            &self.bv,
            &self.bo,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.wq.data_mut(),
            self.wk.data_mut(),
            self.wv.data_mut(),
            self.wo.data_mut(),
            &mut self.bq,
            &mut self.bk,
            &mut self.bv,
            &mut self.bo,
        ]
    }
}

pub(crate) fn check_heads(dim: usize, heads: usize) -> Result<()> {
    if dim == 0 || heads == 0 || dim % heads != 0 {
        return Err(AdeError::config(format!(
            "width {dim} must be a positive multiple of the head count {heads}"
        )));
    }
    Ok(())
}

pub fn sat_param_count(dim: usize) -> usize {
    4 * (dim * dim + dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerNormParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.gain.len()
    }
}

/// Scoring vector for attention pooling: `score_t = w·x_t + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolerParams {
    pub score_w: Vec<f64>,
    pub score_b: f64,
}

impl PoolerParams {
    /// Zero scores: pooling starts as a masked mean.
    pub fn zeros(dim: usize) -> Self {
        Self {
            score_w: vec![0.0; dim],
            score_b: 0.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.score_w.len() + 1
    }
}

/// Classifier `logits = W·p + b` with `W: C × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w: Tensor,
    pub b: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            w: Tensor::zeros(vec![classes, dim]),
            b: vec![0.0; classes],
        }
    }

    pub fn init(classes: usize, dim: usize, rng: &mut AdeRng) -> Self {
        let mut h = Self::zeros(classes, dim);
        h.w.data_mut()
            .copy_from_slice(&normal_vec(rng, classes * dim, 1.0 / (dim as f64).sqrt()));
        h
    }

    pub fn classes(&self) -> usize {
        self.b.len()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}
