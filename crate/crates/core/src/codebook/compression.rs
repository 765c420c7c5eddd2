use serde::{Deserialize, Serialize};

use crate::codebook::SparseCodebook;

const MIB: f64 = 1_048_576.0;
const FLOAT_BYTES: u64 = 4;

/// Byte widths of the per-token codebook records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageLayout {
    pub index_bytes: u64,
    pub weight_bytes: u64,
    /// Per-word cardinality field.
    pub cardinality_bytes: u64,
}

impl Default for StorageLayout {
    fn default() -> Self {
        Self {
            index_bytes: 4,
            weight_bytes: 4,
            cardinality_bytes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionInput {
    pub n_words: u64,
    pub dim: u64,
    pub num_anchors: u64,
    /// Σ k_i over the vocabulary.
    pub total_cardinality: u64,
    pub layout: StorageLayout,
    /// Parameter count of the dense embedding being replaced.
    pub baseline_params: u64,
}

impl CompressionInput {
    /// Uses `round(N · mean_k)` as the total cardinality and a dense `N × d`
    /// baseline.
    pub fn with_mean_cardinality(n_words: u64, dim: u64, num_anchors: u64, mean_k: f64, layout: StorageLayout) -> Self {
        Self {
            n_words,
            dim,
            num_anchors,
            total_cardinality: (n_words as f64 * mean_k).round() as u64,
            layout,
            baseline_params: n_words * dim,
        }
    }

    pub fn from_codebook(cb: &SparseCodebook, dim: usize, layout: StorageLayout) -> Self {
        let n = cb.num_words() as u64;
        Self {
            n_words: n,
            dim: dim as u64,
            num_anchors: cb.num_anchors() as u64,
            total_cardinality: cb.total_entries() as u64,
            layout,
            baseline_params: n * dim as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub num_anchors: u64,
    pub a_params: u64,
    pub storage_bytes: u64,
    pub storage_mb: f64,
    pub baseline_params: u64,
    pub baseline_bytes: u64,
    pub baseline_mb: f64,
    pub ratio: f64,
    pub reduction_pct: f64,
}

/// Storage of an anchor codebook against a dense 32-bit embedding table.
///
/// `storage = 4·K·d + Σk_i·(index + weight bytes) + N·cardinality bytes`;
/// megabytes are `bytes / 2^20`.
pub fn compression_report(input: &CompressionInput) -> CompressionReport {
    let a_params = input.num_anchors * input.dim;
    let per_entry = input.layout.index_bytes + input.layout.weight_bytes;
    let storage_bytes = FLOAT_BYTES * a_params
        + input.total_cardinality * per_entry
        + input.n_words * input.layout.cardinality_bytes;
    let baseline_bytes = FLOAT_BYTES * input.baseline_params;
    CompressionReport {
        num_anchors: input.num_anchors,
        a_params,
        storage_bytes,
        storage_mb: storage_bytes as f64 / MIB,
        baseline_params: input.baseline_params,
        baseline_bytes,
        baseline_mb: baseline_bytes as f64 / MIB,
        ratio: baseline_bytes as f64 / storage_bytes as f64,
        reduction_pct: 100.0 * (1.0 - storage_bytes as f64 / baseline_bytes as f64),
    }
}
