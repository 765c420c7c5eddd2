//! Sparse multi-anchor vocabulary.
//!
//! Each word owns a short sorted list of anchor indices into a shared
//! `K × d` anchor matrix together with one scalar weight per index. Token
//! embeddings are the weighted sum of the word's active anchors.

mod compression;
mod format;
mod lookup;

pub use compression::{compression_report, CompressionInput, CompressionReport, StorageLayout};
pub use format::{read_codebook, write_codebook, CODEBOOK_MAGIC};
pub use lookup::{
    compose, compose_rows, flat_lookup, lookup, padding_mask, GroupedSequence, TokenBatch,
    SENTINEL_SLOT,
};

use serde::{Deserialize, Serialize};

use crate::error::{AdeError, Result};
use crate::numcore::Tensor;

pub const DEFAULT_TAU: f64 = 0.1;

/// Shared `K × d` anchor table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMatrix {
    values: Tensor,
}

impl AnchorMatrix {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 2 || values.rows() == 0 || values.cols() == 0 {
            return Err(AdeError::config(format!(
                "anchor matrix must be K×d with K, d ≥ 1, got {:?}",
                values.shape()
            )));
        }
        if !values.is_finite() {
            return Err(AdeError::config("anchor matrix has non-finite values"));
        }
        Ok(Self { values })
    }

    pub fn num_anchors(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        self.values.data_mut()
    }
}

/// Per-word active anchor indices and weights, stored compressed-row style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCodebook {
    num_anchors: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseCodebook {
    /// Builds a codebook from per-word `(indices, weights)` records, validating
    /// every invariant.
    pub fn from_entries(num_anchors: usize, entries: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        if num_anchors == 0 {
            return Err(AdeError::config("codebook needs K ≥ 1"));
        }
        let mut offsets = Vec::with_capacity(entries.len() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for (word, (idx, w)) in entries.into_iter().enumerate() {
            validate_entry(word, num_anchors, &idx, &w)?;
            indices.extend(idx);
            weights.extend(w);
            offsets.push(indices.len());
        }
        Ok(Self {
            num_anchors,
            offsets,
            indices,
            weights,
        })
    }

    pub fn num_words(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_anchors(&self) -> usize {
        self.num_anchors
    }

    pub fn cardinality(&self, word: usize) -> usize {
        self.offsets[word + 1] - self.offsets[word]
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        (0..self.num_words()).map(|w| self.cardinality(w)).collect()
    }

    pub fn indices(&self, word: usize) -> &[usize] {
        &self.indices[self.offsets[word]..self.offsets[word + 1]]
    }

    pub fn weights(&self, word: usize) -> &[f64] {
        &self.weights[self.offsets[word]..self.offsets[word + 1]]
    }

    /// Offset of `word`'s first weight inside [`Self::all_weights`].
    pub fn offset(&self, word: usize) -> usize {
        self.offsets[word]
    }

    pub fn total_entries(&self) -> usize {
        self.indices.len()
    }

    pub fn all_weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn all_weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn mean_cardinality(&self) -> f64 {
        self.total_entries() as f64 / self.num_words().max(1) as f64
    }

    /// Dense `N × K` weight matrix (zeros outside the active sets).
    pub fn to_dense(&self) -> Tensor {
        let (n, k) = (self.num_words(), self.num_anchors);
        let mut t = Tensor::zeros(vec![n, k]);
        for w in 0..n {
            for (&j, &b) in self.indices(w).iter().zip(self.weights(w)) {
                t.row_mut(w)[j] = b;
            }
        }
        t
    }
}

fn validate_entry(word: usize, k: usize, idx: &[usize], w: &[f64]) -> Result<()> {
    if idx.is_empty() || idx.len() > k {
        return Err(AdeError::config(format!(
            "word {word}: cardinality {} outside [1, {k}]",
            idx.len()
        )));
    }
    if idx.len() != w.len() {
        return Err(AdeError::config(format!("word {word}: index/weight length mismatch")));
    }
    if idx.iter().any(|&j| j >= k) {
        return Err(AdeError::Index(format!("word {word}: anchor index ≥ K={k}")));
    }
    if idx.windows(2).any(|p| p[0] >= p[1]) {
        return Err(AdeError::config(format!(
            "word {word}: indices must be strictly increasing"
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(AdeError::config(format!("word {word}: non-finite weight")));
    }
    Ok(())
}

/// Vocabulary projection: keep `{j : T[i,j] ≥ τ}` with weights `T[i,j]`.
///
/// A word whose active set is empty keeps its single largest-weight anchor
/// (with that sub-threshold weight), so every cardinality is at least one.
pub fn build_vp(transform: &Tensor, tau: f64) -> Result<SparseCodebook> {
    if transform.shape().len() != 2 || transform.rows() == 0 || transform.cols() == 0 {
        return Err(AdeError::config(format!(
            "transform must be N×K with N, K ≥ 1, got {:?}",
            transform.shape()
        )));
    }
    if !transform.is_finite() || !tau.is_finite() {
        return Err(AdeError::config("transform and threshold must be finite"));
    }
    let k = transform.cols();
    let entries = (0..transform.rows())
        .map(|i| {
            let row = transform.row(i);
            let active: Vec<usize> = (0..k).filter(|&j| row[j] >= tau).collect();
            if active.is_empty() {
                // first maximum wins on ties
                let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                (vec![best], vec![row[best]])
            } else {
                let w = active.iter().map(|&j| row[j]).collect();
                (active, w)
            }
        })
        .collect();
    SparseCodebook::from_entries(k, entries)
}

/// Per-word concatenation of active anchor vectors, zero-padded to `K·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedEmbedding {
    values: Tensor,
    sub_lengths: Vec<usize>,
    num_anchors: usize,
    dim: usize,
}

impl FlattenedEmbedding {
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn sub_lengths(&self) -> &[usize] {
        &self.sub_lengths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_anchors(&self) -> usize {
        self.num_anchors
    }

    /// The `slot`-th anchor vector stored for `word`.
    pub fn anchor(&self, word: usize, slot: usize) -> &[f64] {
        let row = self.values.row(word);
        &row[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Strips padding: per word, its `k_i` anchor vectors (as a `k_i × d`
    /// tensor), plus the cardinality map.
    pub fn unflatten(&self) -> (Vec<Tensor>, Vec<usize>) {
        let groups = self
            .sub_lengths
            .iter()
            .enumerate()
            .map(|(w, &k)| {
                let row = self.values.row(w);
                Tensor::new(vec![k, self.dim], row[..k * self.dim].to_vec()).expect("k·d values")
            })
            .collect();
        (groups, self.sub_lengths.clone())
    }
}

pub fn flatten_codebook(cb: &SparseCodebook, anchors: &AnchorMatrix) -> Result<FlattenedEmbedding> {
    let (k, d) = (cb.num_anchors(), anchors.dim());
    if k != anchors.num_anchors() {
        return Err(AdeError::corrupt(format!(
            "codebook K={k} but anchor matrix has {} rows",
            anchors.num_anchors()
        )));
    }
    let mut values = Tensor::zeros(vec![cb.num_words(), k * d]);
    for w in 0..cb.num_words() {
        let row = values.row_mut(w);
        for (slot, &j) in cb.indices(w).iter().enumerate() {
            if j >= anchors.num_anchors() {
                return Err(AdeError::corrupt(format!("word {w}: anchor index {j} out of range")));
            }
            row[slot * d..(slot + 1) * d].copy_from_slice(anchors.row(j));
        }
    }
    Ok(FlattenedEmbedding {
        values,
        sub_lengths: cb.cardinalities(),
        num_anchors: k,
        dim: d,
    })
}
