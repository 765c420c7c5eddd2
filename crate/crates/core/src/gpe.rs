//! Grouped positional encoding.
//!
//! Every anchor of a word receives the sinusoidal encoding of that word's
//! position, so co-anchors share positional information while distinct words
//! stay distinguishable.

use serde::{Deserialize, Serialize};

use crate::error::{AdeError, Result};
use crate::numcore::Tensor;

pub const DEFAULT_MAX_POSITIONS: usize = 512;

/// Fixed sinusoidal table, one row per word position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalTable {
    values: Tensor,
}

impl PositionalTable {
    pub fn max_positions(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, position: usize) -> &[f64] {
        self.values.row(position)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn sinusoidal_pe(positions: usize, dim: usize) -> Result<PositionalTable> {
    if dim == 0 || dim % 2 != 0 {
        return Err(AdeError::config(format!(
            "positional width must be even and positive, got {dim}"
        )));
    }
    if positions == 0 {
        return Err(AdeError::config("positional table needs at least one row"));
    }
    let mut data = vec![0.0; positions * dim];
    for p in 0..positions {
        for i in 0..dim / 2 {
            let freq = 10000f64.powf((2 * i) as f64 / dim as f64);
            let angle = p as f64 / freq;
            data[p * dim + 2 * i] = angle.sin();
            data[p * dim + 2 * i + 1] = angle.cos();
        }
    }
    Ok(PositionalTable {
        values: Tensor::new(vec![positions, dim], data)?,
    })
}

/// Word position of every flattened anchor: word `i` repeated `k_i` times.
pub fn pos_indices(sub_lengths: &[usize]) -> Result<Vec<usize>> {
    if let Some(word) = sub_lengths.iter().position(|&k| k == 0) {
        return Err(AdeError::Contract(format!(
            "word {word} has zero anchors; cardinalities must be clamped to ≥ 1"
        )));
    }
    Ok(sub_lengths
        .iter()
        .enumerate()
        .flat_map(|(word, &k)| std::iter::repeat(word).take(k))
        .collect())
}

/// Rows of `table` gathered at [`pos_indices`]`(sub_lengths)`.
pub fn grouped_pe(table: &PositionalTable, sub_lengths: &[usize]) -> Result<Tensor> {
    if sub_lengths.len() > table.max_positions() {
        return Err(AdeError::Index(format!(
            "{} word positions exceed table length {}",
            sub_lengths.len(),
            table.max_positions()
        )));
    }
    let idx = pos_indices(sub_lengths)?;
    let d = table.dim();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &p in &idx {
        data.extend_from_slice(table.row(p));
    }
    Tensor::new(vec![idx.len(), d], data)
}
