//! Masked multi-head attention over a flattened anchor sequence.

use crate::error::{AdeError, Result};
use crate::gpe::PositionalTable;
use crate::numcore::{
    axpy, dot, gemm_a_bt_acc, gemm_acc, gemm_at_b_acc, masked_softmax, masked_softmax_backward,
    Tensor,
};
use crate::sat::SatParams;

/// Intermediates of one sequence's attention pass.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    len: usize,
    /// attention input (anchors plus positional rows)
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// per head, `len × len` attention weights (rows of skipped queries are empty)
    probs: Vec<Vec<f64>>,
    /// concatenated head outputs before `Wo`
    heads_out: Vec<f64>,
    valid: Vec<bool>,
    queries: Vec<bool>,
}

fn project(x: &[f64], w: &Tensor, b: &[f64], len: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * d);
    for _ in 0..len {
        out.extend_from_slice(b);
    }
    gemm_acc(x, w.data(), len, d, d, &mut out);
    out
}

/// `Wo · MHA(input) + bo` for one sequence of `len` rows.
///
/// Keys/values at positions where `valid` is false receive exactly zero
/// weight. Query rows with `compute_query[t] == false` are left as `bo`.
pub(crate) fn attention_row_forward(
    input: &[f64],
    len: usize,
    valid: &[bool],
    compute_query: &[bool],
    p: &SatParams,
) -> Result<(Vec<f64>, AttentionCache)> {
    let d = p.dim();
    let (h, dk) = (p.heads, p.head_dim());
    if !valid.iter().any(|&v| v) {
        return Err(AdeError::Contract("attention row has no valid key".into()));
    }
    let q = project(input, &p.wq, &p.bq, len, d);
    let k = project(input, &p.wk, &p.bk, len, d);
    let v = project(input, &p.wv, &p.bv, len, d);
    let scale = 1.0 / (dk as f64).sqrt();

    let mut probs = vec![Vec::new(); h * len];
    let mut heads_out = vec![0.0; len * d];
    let mut scores = vec![0.0; len];
    for head in 0..h {
        let cols = head * dk..(head + 1) * dk;
        for i in 0..len {
            if !compute_query[i] {
                continue;
            }
            let qi = &q[i * d..(i + 1) * d][cols.clone()];
            for j in 0..len {
                scores[j] = if valid[j] {
                    dot(qi, &k[j * d..(j + 1) * d][cols.clone()]) * scale
                } else {
                    f64::NEG_INFINITY
                };
            }
            let pr = masked_softmax(&scores, valid)?;
            let out = &mut heads_out[i * d..(i + 1) * d][cols.clone()];
            for j in (0..len).filter(|&j| valid[j]) {
                axpy(pr[j], &v[j * d..(j + 1) * d][cols.clone()], out);
            }
            probs[head * len + i] = pr;
        }
    }
    let mut out = project(&heads_out, &p.wo, &p.bo, len, d);
    for i in (0..len).filter(|&i| !compute_query[i]) {
        out[i * d..(i + 1) * d].copy_from_slice(&p.bo);
    }
    let cache = AttentionCache {
        len,
        input: input.to_vec(),
        q,
        k,
        v,
        probs,
        heads_out,
        valid: valid.to_vec(),
        queries: compute_query.to_vec(),
    };
    Ok((out, cache))
}

/// Accumulates parameter gradients into `grads` and returns `d input`.
pub(crate) fn attention_row_backward(
    cache: &AttentionCache,
    p: &SatParams,
    dout: &[f64],
    grads: &mut SatParams,
) -> Vec<f64> {
    let d = p.dim();
    let len = cache.len;
    let (h, dk) = (p.heads, p.head_dim());
    let scale = 1.0 / (dk as f64).sqrt();

    // rows of skipped queries do not depend on the heads' output
    let mut dout_q = dout.to_vec();
    for i in (0..len).filter(|&i| !cache.queries[i]) {
        dout_q[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 0.0);
    }
    for i in 0..len {
        axpy(1.0, &dout[i * d..(i + 1) * d], &mut grads.bo);
    }
    gemm_at_b_acc(&cache.heads_out, &dout_q, len, d, d, grads.wo.data_mut());
    let mut dheads = vec![0.0; len * d];
    gemm_a_bt_acc(&dout_q, p.wo.data(), len, d, d, &mut dheads);

    let mut dq = vec![0.0; len * d];
    let mut dk_ = vec![0.0; len * d];
    let mut dv = vec![0.0; len * d];
    let mut dprob = vec![0.0; len];
    for head in 0..h {
        let cols = head * dk..(head + 1) * dk;
        for i in (0..len).filter(|&i| cache.queries[i]) {
            let pr = &cache.probs[head * len + i];
            let dhi = &dheads[i * d..(i + 1) * d][cols.clone()];
            for j in 0..len {
                dprob[j] = if cache.valid[j] {
                    dot(dhi, &cache.v[j * d..(j + 1) * d][cols.clone()])
                } else {
                    0.0
                };
            }
            for j in (0..len).filter(|&j| cache.valid[j]) {
                axpy(pr[j], dhi, &mut dv[j * d..(j + 1) * d][cols.clone()]);
            }
            let ds = masked_softmax_backward(pr, &dprob);
            for j in (0..len).filter(|&j| cache.valid[j] && ds[j] != 0.0) {
                let g = ds[j] * scale;
                axpy(g, &cache.k[j * d..(j + 1) * d][cols.clone()], &mut dq[i * d..(i + 1) * d][cols.clone()]);
                axpy(g, &cache.q[i * d..(i + 1) * d][cols.clone()], &mut dk_[j * d..(j + 1) * d][cols.clone()]);
            }
        }
    }

    let mut dinput = vec![0.0; len * d];
    for (dproj, w, gw, gb) in [
        (&dq, &p.wq, &mut grads.wq, &mut grads.bq),
        (&dk_, &p.wk, &mut grads.wk, &mut grads.bk),
        (&dv, &p.wv, &mut grads.wv, &mut grads.bv),
    ] {
        gemm_at_b_acc(&cache.input, dproj, len, d, d, gw.data_mut());
        for i in 0..len {
            axpy(1.0, &dproj[i * d..(i + 1) * d], gb);
        }
        gemm_a_bt_acc(dproj, w.data(), len, d, d, &mut dinput);
    }
    dinput
}

/// Word position of every valid anchor row: word `l` repeated `s[l]` times,
/// skipping masked-off words (`s[l] == 0`).
pub(crate) fn anchor_positions(sub_lengths: &[usize]) -> Vec<usize> {
    sub_lengths
        .iter()
        .enumerate()
        .flat_map(|(l, &k)| std::iter::repeat(l).take(k))
        .collect()
}

/// Intermediates of one sequence through the SAT block.
#[derive(Debug, Clone)]
pub(crate) struct SatCache {
    attn: AttentionCache,
}

/// `y = x + Attention(x + PE_grouped)` for one sequence.
///
/// `x` holds `len` rows; the first `Σ s` rows are valid anchors, the rest
/// padding.
pub(crate) fn sat_row_forward(
    x: &[f64],
    len: usize,
    sub_lengths: &[usize],
    valid_queries_only: bool,
    p: &SatParams,
    pe: &PositionalTable,
) -> Result<(Vec<f64>, SatCache)> {
    let d = p.dim();
    if pe.dim() != d {
        return Err(AdeError::shape(format!(
            "positional width {} differs from model width {d}",
            pe.dim()
        )));
    }
    let positions = anchor_positions(sub_lengths);
    if positions.len() > len {
        return Err(AdeError::shape(format!(
            "sub-lengths sum to {} but the row holds {len} anchors",
            positions.len()
        )));
    }
    if let Some(&last) = positions.last() {
        if last >= pe.max_positions() {
            return Err(AdeError::Index(format!(
                "word position {last} exceeds positional table length {}",
                pe.max_positions()
            )));
        }
    }
    let mut input = x.to_vec();
    for (t, &pos) in positions.iter().enumerate() {
        axpy(1.0, pe.row(pos), &mut input[t * d..(t + 1) * d]);
    }
    let valid: Vec<bool> = (0..len).map(|t| t < positions.len()).collect();
    let queries = if valid_queries_only { valid.clone() } else { vec![true; len] };
    let (attn_out, attn) = attention_row_forward(&input, len, &valid, &queries, p)?;
    let y = x.iter().zip(&attn_out).map(|(a, b)| a + b).collect();
    Ok((y, SatCache { attn }))
}

pub(crate) fn sat_row_backward(cache: &SatCache, p: &SatParams, dy: &[f64], grads: &mut SatParams) -> Vec<f64> {
    let dinput = attention_row_backward(&cache.attn, p, dy, grads);
    dy.iter().zip(&dinput).map(|(a, b)| a + b).collect()
}

fn check_batch(x: &Tensor, mask: &[bool], d: usize) -> Result<(usize, usize)> {
    if x.shape().len() != 3 || x.shape()[2] != d {
        return Err(AdeError::shape(format!("expected B×T×{d}, got {:?}", x.shape())));
    }
    let (b, t) = (x.shape()[0], x.shape()[1]);
    if mask.len() != b * t {
        return Err(AdeError::shape(format!("mask has {} entries for {b}×{t}", mask.len())));
    }
    Ok((b, t))
}

/// Multi-head scaled dot-product attention followed by the output projection.
///
/// `x` is `B × T × d`; `mask` is `B × T` and marks valid key positions.
pub fn attention(x: &Tensor, mask: &[bool], p: &SatParams) -> Result<Tensor> {
    let d = p.dim();
    let (b, t) = check_batch(x, mask, d)?;
    let mut out = Vec::with_capacity(x.len());
    for row in 0..b {
        let xs = &x.data()[row * t * d..(row + 1) * t * d];
        let valid = &mask[row * t..(row + 1) * t];
        out.extend(attention_row_forward(xs, t, valid, &vec![true; t], p)?.0);
    }
    Tensor::new(vec![b, t, d], out)
}

/// The SAT block over a padded batch: grouped positional encoding from the
/// `B × L` sub-length map, masked attention, residual connection.
pub fn sat_forward(
    x: &Tensor,
    sub_lengths: &[usize],
    mask: &[bool],
    p: &SatParams,
    pe: &PositionalTable,
) -> Result<Tensor> {
    let d = p.dim();
    let (b, t) = check_batch(x, mask, d)?;
    if b == 0 || sub_lengths.len() % b != 0 {
        return Err(AdeError::shape("sub-length map does not split into batch rows"));
    }
    let l = sub_lengths.len() / b;
    let mut out = Vec::with_capacity(x.len());
    for row in 0..b {
        let s = &sub_lengths[row * l..(row + 1) * l];
        let valid = &mask[row * t..(row + 1) * t];
        let n_valid: usize = s.iter().sum();
        if valid.iter().filter(|&&m| m).count() != n_valid || valid.iter().take(n_valid).any(|&m| !m) {
            return Err(AdeError::Contract(format!(
                "row {row}: mask disagrees with sub-lengths summing to {n_valid}"
            )));
        }
        let xs = &x.data()[row * t * d..(row + 1) * t * d];
        out.extend(sat_row_forward(xs, t, s, false, p, pe)?.0);
    }
    Tensor::new(vec![b, t, d], out)
}
