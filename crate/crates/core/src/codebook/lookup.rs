use crate::codebook::{AnchorMatrix, FlattenedEmbedding, SparseCodebook};
use crate::error::{AdeError, Result};
use crate::numcore::{scatter_add, Tensor};

/// Weight slot used by the zero-weight sentinel emitted for fully masked rows.
pub const SENTINEL_SLOT: usize = usize::MAX;

/// A `B × L` batch of token ids with its attention mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

impl TokenBatch {
    pub fn new(ids: Vec<usize>, mask: Vec<bool>, batch: usize, len: usize) -> Result<Self> {
        if ids.len() != batch * len || mask.len() != batch * len {
            return Err(AdeError::shape(format!(
                "token batch {batch}×{len} needs {} ids and mask entries, got {} and {}",
                batch * len,
                ids.len(),
                mask.len()
            )));
        }
        Ok(Self { ids, mask, batch, len })
    }

    /// Stacks equally long `(ids, mask)` rows.
    pub fn from_rows(rows: &[(Vec<usize>, Vec<bool>)]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.0.len());
        let mut ids = Vec::with_capacity(rows.len() * len);
        let mut mask = Vec::with_capacity(rows.len() * len);
        for (i, m) in rows {
            if i.len() != len || m.len() != len {
                return Err(AdeError::shape("ragged token rows"));
            }
            ids.extend_from_slice(i);
            mask.extend_from_slice(m);
        }
        Self::new(ids, mask, rows.len(), len)
    }

    pub fn row_ids(&self, b: usize) -> &[usize] {
        &self.ids[b * self.len..(b + 1) * self.len]
    }

    pub fn row_mask(&self, b: usize) -> &[bool] {
        &self.mask[b * self.len..(b + 1) * self.len]
    }
}

/// Flattened anchor sequence for a batch, in batch-then-position order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSequence {
    pub batch: usize,
    pub seq_len: usize,
    pub dim: usize,
    /// `M_total × d` anchor vectors
    pub anchors: Tensor,
    pub weights: Vec<f64>,
    /// Row of the anchor matrix each entry came from (`usize::MAX` for sentinels).
    pub anchor_ids: Vec<usize>,
    /// Offset of each weight inside the codebook's weight storage.
    pub weight_slots: Vec<usize>,
    pub batch_map: Vec<usize>,
    pub pos_map: Vec<usize>,
    /// `B × L` anchor cardinalities; zero for masked-off words.
    pub sub_lengths: Vec<usize>,
    /// Start of each batch row inside the flattened sequence (`B + 1` entries).
    pub row_offsets: Vec<usize>,
    /// `B × T_max` padding mask.
    pub mask: Vec<bool>,
    pub t_max: usize,
}

impl GroupedSequence {
    pub fn total_anchors(&self) -> usize {
        self.weights.len()
    }

    pub fn global_ids(&self) -> Vec<usize> {
        self.batch_map
            .iter()
            .zip(&self.pos_map)
            .map(|(b, p)| b * self.seq_len + p)
            .collect()
    }

    pub fn row_sub_lengths(&self, b: usize) -> &[usize] {
        &self.sub_lengths[b * self.seq_len..(b + 1) * self.seq_len]
    }

    /// Number of anchors in batch row `b`.
    pub fn row_len(&self, b: usize) -> usize {
        self.row_offsets[b + 1] - self.row_offsets[b]
    }

    pub fn row_mask(&self, b: usize) -> &[bool] {
        &self.mask[b * self.t_max..(b + 1) * self.t_max]
    }
}

/// `M[b, t] = t < Σ_i s[b, i]`, with `T_max` the largest row sum.
pub fn padding_mask(sub_lengths: &[usize], batch: usize) -> Result<(Vec<bool>, usize)> {
    if batch == 0 || sub_lengths.len() % batch != 0 {
        return Err(AdeError::shape(format!(
            "{} sub-lengths do not split into {batch} rows",
            sub_lengths.len()
        )));
    }
    let len = sub_lengths.len() / batch;
    let sums: Vec<usize> = sub_lengths.chunks(len.max(1)).map(|r| r.iter().sum()).collect();
    let t_max = sums.iter().copied().max().unwrap_or(0);
    let mut mask = vec![false; batch * t_max];
    for (b, &s) in sums.iter().enumerate() {
        mask[b * t_max..b * t_max + s].iter_mut().for_each(|m| *m = true);
    }
    Ok((mask, t_max))
}

fn gather<F>(
    cb: &SparseCodebook,
    dim: usize,
    tokens: &TokenBatch,
    mut anchor_row: F,
) -> Result<GroupedSequence>
where
    F: FnMut(usize, usize, usize) -> Result<Vec<f64>>,
{
    let (b_count, l) = (tokens.batch, tokens.len);
    let mut anchors = Vec::new();
    let mut gs = GroupedSequence {
        batch: b_count,
        seq_len: l,
        dim,
        anchors: Tensor::zeros(vec![0, dim]),
        weights: Vec::new(),
        anchor_ids: Vec::new(),
        weight_slots: Vec::new(),
        batch_map: Vec::new(),
        pos_map: Vec::new(),
        sub_lengths: vec![0; b_count * l],
        row_offsets: vec![0],
        mask: Vec::new(),
        t_max: 0,
    };
    for b in 0..b_count {
        let start = gs.weights.len();
        for pos in 0..l {
            if !tokens.mask[b * l + pos] {
                continue;
            }
            let word = tokens.ids[b * l + pos];
            if word >= cb.num_words() {
                return Err(AdeError::Index(format!(
                    "token id {word} ≥ vocabulary size {}",
                    cb.num_words()
                )));
            }
            let k = cb.cardinality(word);
            gs.sub_lengths[b * l + pos] = k;
            for (slot, (&j, &w)) in cb.indices(word).iter().zip(cb.weights(word)).enumerate() {
                anchors.extend(anchor_row(word, slot, j)?);
                gs.weights.push(w);
                gs.anchor_ids.push(j);
                gs.weight_slots.push(cb.offset(word) + slot);
                gs.batch_map.push(b);
                gs.pos_map.push(pos);
            }
        }
        if gs.weights.len() == start && l > 0 {
            // fully masked row: one zero-weight group keeps ≥1 valid position
            anchors.extend(std::iter::repeat(0.0).take(dim));
            gs.weights.push(0.0);
            gs.anchor_ids.push(usize::MAX);
            gs.weight_slots.push(SENTINEL_SLOT);
            gs.batch_map.push(b);
            gs.pos_map.push(0);
            gs.sub_lengths[b * l] = 1;
        }
        gs.row_offsets.push(gs.weights.len());
    }
    let m = gs.weights.len();
    gs.anchors = Tensor::new(vec![m, dim], anchors)?;
    let (mask, t_max) = padding_mask(&gs.sub_lengths, b_count)?;
    gs.mask = mask;
    gs.t_max = t_max;
    Ok(gs)
}

/// Gathers the active anchors and weights of every unmasked token.
pub fn lookup(cb: &SparseCodebook, anchors: &AnchorMatrix, tokens: &TokenBatch) -> Result<GroupedSequence> {
    if cb.num_anchors() != anchors.num_anchors() {
        return Err(AdeError::shape(format!(
            "codebook K={} but anchor matrix K={}",
            cb.num_anchors(),
            anchors.num_anchors()
        )));
    }
    gather(cb, anchors.dim(), tokens, |_, _, j| Ok(anchors.row(j).to_vec()))
}

/// Same as [`lookup`] but reads anchor vectors from the flattened `E` rows.
pub fn flat_lookup(
    flat: &FlattenedEmbedding,
    cb: &SparseCodebook,
    tokens: &TokenBatch,
) -> Result<GroupedSequence> {
    if flat.sub_lengths() != cb.cardinalities().as_slice() {
        return Err(AdeError::corrupt("flattened cardinality map disagrees with codebook"));
    }
    gather(cb, flat.dim(), tokens, |word, slot, _| Ok(flat.anchor(word, slot).to_vec()))
}

/// Weighted composition: `out[b, l] = Σ β · a` over the word's anchors.
pub fn compose(gs: &GroupedSequence) -> Result<Tensor> {
    let d = gs.dim;
    let mut weighted = gs.anchors.clone();
    for (m, &w) in gs.weights.iter().enumerate() {
        weighted.row_mut(m).iter_mut().for_each(|v| *v *= w);
    }
    compose_rows(&weighted, gs).and_then(|t| t.reshape(vec![gs.batch, gs.seq_len, d]))
}

/// Unweighted per-word sum of arbitrary per-anchor rows (`M_total × d`).
pub fn compose_rows(rows: &Tensor, gs: &GroupedSequence) -> Result<Tensor> {
    let out = scatter_add(rows, &gs.global_ids(), gs.batch * gs.seq_len)?;
    out.reshape(vec![gs.batch, gs.seq_len, rows.cols()])
}
