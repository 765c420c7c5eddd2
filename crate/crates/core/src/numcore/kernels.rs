//! Dense kernels with hand-derived reverse-mode companions.
//!
//! The public `Tensor` entry points validate shapes; the slice-level helpers
//! are what the model code calls in its inner loops.

use crate::error::{AdeError, Result};
use crate::numcore::Tensor;

/// `out[m×n] = a[m×k] · b[k×n]`, accumulating into `out`.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] += aᵀ · g` where `a` is m×k and `g` is m×n.
pub(crate) fn gemm_at_b_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// `out[m×k] += g · bᵀ` where `g` is m×n and `b` is k×n.
pub(crate) fn gemm_a_bt_acc(g: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] += dot(g_row, &b[p * n..(p + 1) * n]);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Standard matrix product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(AdeError::shape("matmul expects 2-D operands"));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(AdeError::shape(format!(
            "matmul inner dimensions differ: {m}×{k} · {k2}×{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm_acc(a.data(), b.data(), m, k, n, &mut out);
    Tensor::new(vec![m, n], out)
}

/// Gradients of `sum(dout ⊙ a·b)` with respect to `a` and `b`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dout: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    if b.rows() != k || dout.shape() != [m, n] {
        return Err(AdeError::shape("matmul_backward shape mismatch"));
    }
    let mut da = vec![0.0; m * k];
    let mut db = vec![0.0; k * n];
    gemm_a_bt_acc(dout.data(), b.data(), m, k, n, &mut da);
    gemm_at_b_acc(a.data(), dout.data(), m, k, n, &mut db);
    Ok((Tensor::new(vec![m, k], da)?, Tensor::new(vec![k, n], db)?))
}

/// Softmax over the entries where `mask` is true; masked entries are exactly 0.
///
/// The max used for stabilisation is taken over unmasked entries only, so a
/// `-inf` (or garbage) score at a masked slot cannot leak in.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(AdeError::shape("scores and mask lengths differ"));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(AdeError::Contract(
            "masked_softmax needs at least one valid position".into(),
        ));
    }
    let mut out = vec![0.0; scores.len()];
    let mut total = 0.0;
    for ((o, &s), &m) in out.iter_mut().zip(scores).zip(mask) {
        if m {
            *o = (s - max).exp();
            total += *o;
        }
    }
    for (o, &m) in out.iter_mut().zip(mask) {
        if m {
            *o /= total;
        }
    }
    Ok(out)
}

/// Reverse of [`masked_softmax`]: `ds = p ⊙ (dp − ⟨p, dp⟩)`. Masked slots have `p = 0`.
pub fn masked_softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let inner = dot(probs, dprobs);
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, dp)| p * (dp - inner))
        .collect()
}

/// Per-row layer normalisation state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    layer_norm_forward(x, gain, bias, eps).0
}

pub fn layer_norm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> (Vec<f64>, LayerNormCache) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let out = normalized
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(n, (g, b))| g * n + b)
        .collect();
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns `dx` and accumulates into `dgain`/`dbias`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    dout: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let d = dout.len() as f64;
    let xhat = &cache.normalized;
    let mut dxhat = vec![0.0; dout.len()];
    for i in 0..dout.len() {
        dgain[i] += dout[i] * xhat[i];
        dbias[i] += dout[i];
        dxhat[i] = dout[i] * gain[i];
    }
    let mean_dxhat = dxhat.iter().sum::<f64>() / d;
    let mean_dxhat_xhat = dot(&dxhat, xhat) / d;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(g, xh)| cache.inv_std * (g - mean_dxhat - xh * mean_dxhat_xhat))
        .collect()
}

/// Sums rows of `values` into `size` output slots selected by `ids`.
pub fn scatter_add(values: &Tensor, ids: &[usize], size: usize) -> Result<Tensor> {
    if values.shape().len() != 2 || values.rows() != ids.len() {
        return Err(AdeError::shape(format!(
            "scatter_add: {} ids for values of shape {:?}",
            ids.len(),
            values.shape()
        )));
    }
    let d = values.cols();
    let mut out = vec![0.0; size * d];
    for (m, &id) in ids.iter().enumerate() {
        if id >= size {
            return Err(AdeError::Index(format!("scatter id {id} ≥ size {size}")));
        }
        axpy(1.0, values.row(m), &mut out[id * d..(id + 1) * d]);
    }
    Tensor::new(vec![size, d], out)
}

/// Stabilised `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(AdeError::Index(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + total.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|l| (l - log_z).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mask = vec![true; logits.len()];
    masked_softmax(logits, &mask).expect("non-empty logits")
}
