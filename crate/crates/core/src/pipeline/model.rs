use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{flatten_codebook, lookup, AnchorMatrix, FlattenedEmbedding, GroupedSequence, SparseCodebook, TokenBatch};
use crate::data::Vocab;
use crate::error::{AdeError, Result};
use crate::gpe::{sinusoidal_pe, PositionalTable, DEFAULT_MAX_POSITIONS};
use crate::numcore::rng::{normal_vec, seeded, substream, AdeRng};
use crate::numcore::{axpy, cross_entropy, layer_norm_backward, layer_norm_forward, LayerNormCache, Tensor};
use crate::sat::{
    classify_row, classify_row_backward, count_params, pool_row, pool_row_backward, sat_row_backward, sat_row_forward,
    HeadParams, LayerNormParams, ParamConfig, ParamTable, PoolerParams, SatCache, SatParams,
};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub classes: usize,
    pub dropout: f64,
    pub trainable_embeddings: bool,
    /// run the attention block (false for the static-composition ablation)
    pub use_sat: bool,
    pub max_positions: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            heads: 2,
            classes: 4,
            dropout: 0.1,
            trainable_embeddings: true,
            use_sat: true,
            max_positions: DEFAULT_MAX_POSITIONS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        crate::sat::check_heads(self.dim, self.heads)?;
        if self.dim % 2 != 0 {
            return Err(AdeError::config("model width must be even for the positional table"));
        }
        if self.classes < 2 {
            return Err(AdeError::config("classifier needs at least 2 classes"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AdeError::config("dropout rate must lie in [0, 1)"));
        }
        if self.max_positions == 0 {
            return Err(AdeError::config("positional table needs at least one row"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// dropout active, masks drawn from this seed
    Train { seed: u64 },
}

/// Knobs of a single forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub use_sat: bool,
    pub mode: Mode,
    /// Fill padded anchor slots with Gaussian noise from this seed instead of
    /// zeros. Valid outputs must not change; used to audit the padding mask.
    pub padding_noise: Option<u64>,
}

impl ForwardOptions {
    pub fn new(use_sat: bool, mode: Mode) -> Self {
        Self { use_sat, mode, padding_noise: None }
    }
}

/// Intermediates of one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `B × T_max × d` anchor states after the attention block (padded
    /// slots hold whatever was fed in)
    pub anchor_states: Tensor,
    pub anchor_mask: Vec<bool>,
    /// `B × L × d` composed and normalised token embeddings (zero where masked)
    pub token_states: Tensor,
    pub pooled: Tensor,
    pub logits: Tensor,
    /// total anchors processed, Σ k over unmasked tokens
    pub expanded_len: usize,
}

#[derive(Debug, Clone)]
struct RowTape {
    start: usize,
    count: usize,
    sat: Option<SatCache>,
    ln: Vec<Option<LayerNormCache>>,
    normed: Vec<f64>,
    pool_weights: Vec<f64>,
    pooled: Vec<f64>,
    /// inverted-dropout multipliers (train mode only)
    dropout: Option<Vec<f64>>,
    logits: Vec<f64>,
}

/// Gradients with the same layout as the model's trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub sat: SatParams,
    pub ln: LayerNormParams,
    pub pooler: PoolerParams,
    pub head: HeadParams,
    pub anchors: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.sat.slices().iter().for_each(|s| out.extend_from_slice(s));
        out.extend_from_slice(&self.ln.gain);
        out.extend_from_slice(&self.ln.bias);
        out.extend_from_slice(&self.pooler.score_w);
        out.push(self.pooler.score_b);
        out.extend_from_slice(self.head.w.data());
        out.extend_from_slice(&self.head.b);
        out.extend_from_slice(&self.anchors);
        out.extend_from_slice(&self.weights);
        out
    }
}

/// Codebook, anchors, attention block, pooler and classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AdeModel {
    pub config: ModelConfig,
    pub codebook: SparseCodebook,
    pub anchors: AnchorMatrix,
    pub sat: SatParams,
    pub ln: LayerNormParams,
    pub pooler: PoolerParams,
    pub head: HeadParams,
    pub pe: PositionalTable,
    pub vocab: Option<Vocab>,
}

impl AdeModel {
    pub fn new(config: ModelConfig, codebook: SparseCodebook, anchors: AnchorMatrix, seed: u64) -> Result<Self> {
        config.validate()?;
        if anchors.dim() != config.dim {
            return Err(AdeError::shape(format!("anchor width {} differs from model width {}", anchors.dim(), config.dim)));
        }
        if codebook.num_anchors() != anchors.num_anchors() {
            return Err(AdeError::shape("codebook and anchor matrix disagree on K"));
        }
        let mut rng = substream(seed, 0xA11);
        let sat = SatParams::init(config.dim, config.heads, &mut rng)?;
        let head = HeadParams::init(config.classes, config.dim, &mut rng);
        let pe = sinusoidal_pe(config.max_positions, config.dim)?;
        Ok(Self {
            ln: LayerNormParams::identity(config.dim),
            pooler: PoolerParams::zeros(config.dim),
            config,
            codebook,
            anchors,
            sat,
            head,
            pe,
            vocab: None,
        })
    }

    pub fn with_vocab(mut self, vocab: Vocab) -> Result<Self> {
        if vocab.len() != self.codebook.num_words() {
            return Err(AdeError::shape(format!(
                "vocabulary has {} tokens but the codebook {} words",
                vocab.len(),
                self.codebook.num_words()
            )));
        }
        self.vocab = Some(vocab);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn flattened(&self) -> Result<FlattenedEmbedding> {
        flatten_codebook(&self.codebook, &self.anchors)
    }

    pub fn param_table(&self) -> Result<ParamTable> {
        count_params(&ParamConfig {
            dim: self.config.dim,
            heads: self.config.heads,
            classes: self.config.classes,
            num_anchors: self.anchors.num_anchors(),
            codebook_entries: self.codebook.total_entries(),
            trainable_embeddings: self.config.trainable_embeddings,
        })
    }

    /// Length of [`flat_params`](Self::flat_params).
    pub fn num_params(&self) -> usize {
        self.embedding_offset() + self.anchors.values().len() + self.codebook.total_entries()
    }

    /// Index in the flat vector where anchor and weight entries begin.
    pub fn embedding_offset(&self) -> usize {
        let d = self.config.dim;
        self.sat.param_count() + 2 * d + d + 1 + self.head.param_count()
    }

    /// Every parameter in a fixed order: attention, norm, pooler, head,
    /// anchors, codebook weights.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.sat.slices().iter().for_each(|s| out.extend_from_slice(s));
        out.extend_from_slice(&self.ln.gain);
        out.extend_from_slice(&self.ln.bias);
        out.extend_from_slice(&self.pooler.score_w);
        out.push(self.pooler.score_b);
        out.extend_from_slice(self.head.w.data());
        out.extend_from_slice(&self.head.b);
        out.extend_from_slice(self.anchors.values().data());
        out.extend_from_slice(self.codebook.all_weights());
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(AdeError::shape(format!("expected {} parameters, got {}", self.num_params(), flat.len())));
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for s in self.sat.slices_mut() {
            take(s);
        }
        take(&mut self.ln.gain);
        take(&mut self.ln.bias);
        take(&mut self.pooler.score_w);
        let mut b = [0.0];
        take(&mut b);
        self.pooler.score_b = b[0];
        take(self.head.w.data_mut());
        take(&mut self.head.b);
        take(self.anchors.data_mut());
        take(self.codebook.all_weights_mut());
        Ok(())
    }

    /// The model with every parameter rounded through `f32`, as stored on disk.
    pub fn rounded_to_f32(&self) -> Self {
        let mut m = self.clone();
        let flat: Vec<f64> = self.flat_params().iter().map(|&v| v as f32 as f64).collect();
        m.set_flat_params(&flat).expect("same length");
        m
    }

    fn zero_grads(&self) -> Gradients {
        let d = self.config.dim;
        Gradients {
            sat: SatParams::zeros(d, self.config.heads).expect("validated"),
            ln: LayerNormParams { gain: vec![0.0; d], bias: vec![0.0; d] },
            pooler: PoolerParams::zeros(d),
            head: HeadParams::zeros(self.config.classes, d),
            anchors: vec![0.0; self.anchors.values().len()],
            weights: vec![0.0; self.codebook.total_entries()],
        }
    }

    fn check_tokens(&self, tokens: &TokenBatch) -> Result<()> {
        if tokens.batch == 0 {
            return Err(AdeError::data("empty batch"));
        }
        for b in 0..tokens.batch {
            if !tokens.row_mask(b).iter().any(|&m| m) {
                return Err(AdeError::data(format!("sequence {b} has no unmasked token")));
            }
        }
        if tokens.len > self.pe.max_positions() {
            return Err(AdeError::Index(format!(
                "sequence length {} exceeds positional table length {}",
                tokens.len,
                self.pe.max_positions()
            )));
        }
        Ok(())
    }

    fn run(&self, tokens: &TokenBatch, opts: &ForwardOptions) -> Result<(GroupedSequence, Vec<RowTape>, Vec<f64>)> {
        self.check_tokens(tokens)?;
        let gs = lookup(&self.codebook, &self.anchors, tokens)?;
        let (d, l, t_max) = (self.config.dim, tokens.len, gs.t_max);
        let mut noise_rng = opts.padding_noise.map(seeded);
        let mut drop_rng: Option<AdeRng> = match opts.mode {
            Mode::Train { seed } if self.config.dropout > 0.0 => Some(substream(seed, 0xD0)),
            _ => None,
        };
        let mut tapes = Vec::with_capacity(tokens.batch);
        let mut states = vec![0.0; tokens.batch * t_max * d];
        for b in 0..tokens.batch {
            let (start, count) = (gs.row_offsets[b], gs.row_len(b));
            let state = &mut states[b * t_max * d..(b + 1) * t_max * d];
            for t in 0..count {
                let row = &mut state[t * d..(t + 1) * d];
                axpy(gs.weights[start + t], gs.anchors.row(start + t), row);
            }
            if let Some(rng) = noise_rng.as_mut() {
                state[count * d..].copy_from_slice(&normal_vec(rng, (t_max - count) * d, 1.0));
            }
            let sat = if opts.use_sat {
                let (y, cache) = sat_row_forward(state, t_max, gs.row_sub_lengths(b), true, &self.sat, &self.pe)?;
                state[..count * d].copy_from_slice(&y[..count * d]);
                Some(cache)
            } else {
                None
            };

            let mut composed = vec![0.0; l * d];
            for t in 0..count {
                let pos = gs.pos_map[start + t];
                axpy(1.0, &state[t * d..(t + 1) * d], &mut composed[pos * d..(pos + 1) * d]);
            }
            let valid = tokens.row_mask(b);
            let mut normed = vec![0.0; l * d];
            let mut ln = vec![None; l];
            for pos in (0..l).filter(|&p| valid[p]) {
                let (out, cache) =
                    layer_norm_forward(&composed[pos * d..(pos + 1) * d], &self.ln.gain, &self.ln.bias, LAYER_NORM_EPS);
                normed[pos * d..(pos + 1) * d].copy_from_slice(&out);
                ln[pos] = Some(cache);
            }
            let (pooled, pool_weights) = pool_row(&normed, l, valid, &self.pooler)?;
            let dropout = drop_rng.as_mut().map(|rng| {
                let keep = 1.0 - self.config.dropout;
                (0..d).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect::<Vec<f64>>()
            });
            let head_in: Vec<f64> = match &dropout {
                Some(m) => pooled.iter().zip(m).map(|(p, s)| p * s).collect(),
                None => pooled.clone(),
            };
            let logits = classify_row(&head_in, &self.head);
            tapes.push(RowTape { start, count, sat, ln, normed, pool_weights, pooled, dropout, logits });
        }
        Ok((gs, tapes, states))
    }

    /// Full pass with every intermediate exposed.
    pub fn forward_trace(&self, tokens: &TokenBatch, opts: &ForwardOptions) -> Result<ForwardTrace> {
        let (gs, tapes, states) = self.run(tokens, opts)?;
        let (b, l, d, c) = (tokens.batch, tokens.len, self.config.dim, self.config.classes);
        Ok(ForwardTrace {
            anchor_states: Tensor::new(vec![b, gs.t_max, d], states)?,
            anchor_mask: gs.mask.clone(),
            token_states: Tensor::new(vec![b, l, d], tapes.iter().flat_map(|t| t.normed.clone()).collect())?,
            pooled: Tensor::new(vec![b, d], tapes.iter().flat_map(|t| t.pooled.clone()).collect())?,
            logits: Tensor::new(vec![b, c], tapes.iter().flat_map(|t| t.logits.clone()).collect())?,
            expanded_len: gs.total_anchors(),
        })
    }

    /// Logits through the attention block.
    pub fn forward(&self, tokens: &TokenBatch, mode: Mode) -> Result<Tensor> {
        Ok(self.forward_trace(tokens, &ForwardOptions::new(true, mode))?.logits)
    }

    /// Logits with the attention block bypassed.
    pub fn forward_no_sat(&self, tokens: &TokenBatch, mode: Mode) -> Result<Tensor> {
        Ok(self.forward_trace(tokens, &ForwardOptions::new(false, mode))?.logits)
    }

    /// Logits along the path selected by `config.use_sat`.
    pub fn logits(&self, tokens: &TokenBatch, mode: Mode) -> Result<Tensor> {
        Ok(self.forward_trace(tokens, &ForwardOptions::new(self.config.use_sat, mode))?.logits)
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, tokens: &TokenBatch, labels: &[usize], opts: &ForwardOptions) -> Result<(f64, Gradients)> {
        if labels.len() != tokens.batch {
            return Err(AdeError::shape(format!("{} labels for a batch of {}", labels.len(), tokens.batch)));
        }
        let (gs, tapes, _) = self.run(tokens, opts)?;
        let (d, l) = (self.config.dim, tokens.len);
        let scale = 1.0 / tokens.batch as f64;
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        for (b, tape) in tapes.iter().enumerate() {
            let (ce, mut dlogits) = cross_entropy(&tape.logits, labels[b])?;
            loss += ce * scale;
            dlogits.iter_mut().for_each(|g| *g *= scale);
            let head_in: Vec<f64> = match &tape.dropout {
                Some(m) => tape.pooled.iter().zip(m).map(|(p, s)| p * s).collect(),
                None => tape.pooled.clone(),
            };
            let mut dpooled = classify_row_backward(&head_in, &self.head, &dlogits, &mut grads.head);
            if let Some(m) = &tape.dropout {
                dpooled.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
            }
            let valid = tokens.row_mask(b);
            let dnormed =
                pool_row_backward(&tape.normed, l, valid, &tape.pool_weights, &self.pooler, &dpooled, &mut grads.pooler);
            let mut dcomposed = vec![0.0; l * d];
            for pos in (0..l).filter(|&p| valid[p]) {
                let cache = tape.ln[pos].as_ref().expect("valid position has a cache");
                let dx = layer_norm_backward(
                    cache,
                    &self.ln.gain,
                    &dnormed[pos * d..(pos + 1) * d],
                    &mut grads.ln.gain,
                    &mut grads.ln.bias,
                );
                dcomposed[pos * d..(pos + 1) * d].copy_from_slice(&dx);
            }
            let mut dstate = vec![0.0; gs.t_max * d];
            for t in 0..tape.count {
                let pos = gs.pos_map[tape.start + t];
                dstate[t * d..(t + 1) * d].copy_from_slice(&dcomposed[pos * d..(pos + 1) * d]);
            }
            if let Some(cache) = &tape.sat {
                dstate = sat_row_backward(cache, &self.sat, &dstate, &mut grads.sat);
            }
            for t in 0..tape.count {
                let m = tape.start + t;
                let dtilde = &dstate[t * d..(t + 1) * d];
                let j = gs.anchor_ids[m];
                grads.weights[gs.weight_slots[m]] += crate::numcore::dot(dtilde, gs.anchors.row(m));
                axpy(gs.weights[m], dtilde, &mut grads.anchors[j * d..(j + 1) * d]);
            }
        }
        Ok((loss, grads))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, tokens: &TokenBatch, labels: &[usize], opts: &ForwardOptions) -> Result<f64> {
        let logits = self.forward_trace(tokens, opts)?.logits;
        let mut total = 0.0;
        for (b, &y) in labels.iter().enumerate() {
            total += cross_entropy(logits.row(b), y)?.0;
        }
        Ok(total / labels.len() as f64)
    }
}
