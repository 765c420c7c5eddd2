use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::error::{AdeError, Result};
use crate::numcore::rng::substream;
use crate::numcore::Adam;
use crate::pipeline::{AdeModel, ForwardOptions, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub use_sat: bool,
    pub trainable_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 32,
            warmup_steps: 100,
            total_steps: 2000,
            weight_decay: 0.01,
            seed: 0,
            use_sat: true,
            trainable_embeddings: true,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning preset with the small learning rate used for large encoders.
    pub fn fine_tune_preset() -> Self {
        Self { learning_rate: 2e-5, warmup_steps: 500, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(AdeError::config(format!(
                "warmup ({}) exceeds total steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(AdeError::config("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(AdeError::config("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(AdeError::config("weight decay must be ≥ 0"));
        }
        Ok(())
    }

    /// Linear warmup to the peak rate, then constant.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
}

impl TrainHistory {
    /// Mean loss over the `window` steps ending at `step` (inclusive).
    pub fn smoothed(&self, step: usize, window: usize) -> f64 {
        let end = (step + 1).min(self.steps.len());
        let start = end.saturating_sub(window.max(1));
        let slice = &self.steps[start..end];
        slice.iter().map(|r| r.loss).sum::<f64>() / slice.len().max(1) as f64
    }
}

/// Stage 3: cross-entropy fine-tuning with AdamW.
///
/// The embedding (anchors and codebook weights) is updated only when
/// `cfg.trainable_embeddings` is set; otherwise those entries are masked out
/// of the optimizer and stay bit-identical.
pub fn train_classifier(model: &AdeModel, data: &EncodedDataset, cfg: &TrainConfig) -> Result<(AdeModel, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(AdeError::data("training set is empty"));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= model.config.classes) {
        return Err(AdeError::data(format!("label {bad} outside [0, {})", model.config.classes)));
    }
    let mut model = model.clone();
    model.config.use_sat = cfg.use_sat;
    model.config.trainable_embeddings = cfg.trainable_embeddings;
    let mut params = model.flat_params();
    let mut opt = Adam::new(params.len()).with_weight_decay(cfg.weight_decay);
    let emb_start = model.embedding_offset();
    let trainable = cfg.trainable_embeddings;
    let mut rng = substream(cfg.seed, 0x7A1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let batch = cfg.batch_size.min(data.len());
    let mut history = TrainHistory::default();

    for step in 0..cfg.total_steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let (tokens, labels) = data.batch(idx)?;
        let opts = ForwardOptions::new(cfg.use_sat, Mode::Train { seed: cfg.seed.wrapping_add(step as u64) });
        let (loss, grads) = model.loss_and_grad(&tokens, &labels, &opts)?;
        if !loss.is_finite() {
            return Err(AdeError::Diverged { step, detail: format!("training loss {loss}") });
        }
        let lr = cfg.lr_at(step);
        history.steps.push(StepRecord { step, loss, lr });
        opt.step_masked(&mut params, &grads.flatten(), lr, |i| trainable || i < emb_start);
        model.set_flat_params(&params)?;
    }
    Ok((model, history))
}

/// Argmax predictions in eval mode, `batch_size` samples at a time.
pub fn predict(model: &AdeModel, data: &EncodedDataset, batch_size: usize) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (tokens, _) = data.batch(chunk)?;
        let logits = model.logits(&tokens, Mode::Eval)?;
        for b in 0..chunk.len() {
            let row = logits.row(b);
            let best = (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best });
            preds.push(best);
        }
    }
    Ok(preds)
}

/// Fraction of correct predictions.
pub fn accuracy(model: &AdeModel, data: &EncodedDataset) -> Result<f64> {
    let preds = predict(model, data, 256)?;
    let correct = preds.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len().max(1) as f64)
}
