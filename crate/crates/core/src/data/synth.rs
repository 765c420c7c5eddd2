use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Record, Split, Vocab, PAD_TOKEN, UNK_TOKEN};
use crate::error::{AdeError, Result};
use crate::numcore::rng::{substream, AdeRng};

/// Generator for a word-sense task.
///
/// Each sample has one trigger token. The class is the sense of the cue token
/// placed directly next to the trigger. A second cue of a different sense is
/// placed at distance at least 3, so the bag of tokens is ambiguous between
/// two senses and only word order resolves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthTaskSpec {
    pub classes: usize,
    /// total token types, excluding pad/unk
    pub vocab_size: usize,
    pub triggers: usize,
    pub cues_per_sense: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// probability that a sample's sense is redrawn uniformly
    pub noise: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SynthTaskSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            vocab_size: 56,
            triggers: 8,
            cues_per_sense: 2,
            min_len: 8,
            max_len: 12,
            noise: 0.0,
            train_size: 2000,
            test_size: 1000,
            seed: 0,
        }
    }
}

/// Exact Bayes accuracies of the generator distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    /// best accuracy of any predictor that sees the token sequence
    pub context_aware: f64,
    /// best accuracy of any predictor that sees only the multiset of tokens
    pub context_free: f64,
}

impl SynthTaskSpec {
    pub const MIN_LEN: usize = 6;

    pub fn fillers(&self) -> usize {
        self.vocab_size.saturating_sub(self.triggers + self.classes * self.cues_per_sense)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(AdeError::config("synthetic task needs at least 2 classes"));
        }
        if self.cues_per_sense == 0 {
            return Err(AdeError::config("each sense needs at least one cue token (cues < classes)"));
        }
        if self.triggers == 0 {
            return Err(AdeError::config("synthetic task needs at least one trigger token"));
        }
        if self.vocab_size < self.triggers + self.classes * self.cues_per_sense + 1 {
            return Err(AdeError::config(format!(
                "vocabulary of {} cannot hold {} triggers, {} cues and a filler",
                self.vocab_size,
                self.triggers,
                self.classes * self.cues_per_sense
            )));
        }
        if self.min_len < Self::MIN_LEN || self.max_len < self.min_len {
            return Err(AdeError::config(format!(
                "sequence lengths must satisfy {} ≤ min ≤ max",
                Self::MIN_LEN
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(AdeError::config("noise rate must lie in [0, 1]"));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(AdeError::config("both splits need at least one sample"));
        }
        Ok(())
    }

    /// Closed-form Bayes rates. Conditioned on the bag, the true sense is
    /// either of the two cue senses with probability ½ each.
    pub fn bayes(&self) -> BayesReport {
        let c = self.classes as f64;
        let eta = self.noise;
        BayesReport {
            context_aware: (1.0 - eta) + eta / c,
            context_free: 0.5 * (1.0 - eta) + eta / c,
        }
    }

    pub fn trigger_token(i: usize) -> String {
        format!("trig{i}")
    }

    pub fn cue_token(sense: usize, j: usize) -> String {
        format!("sense{sense}cue{j}")
    }

    pub fn filler_token(i: usize) -> String {
        format!("w{i}")
    }

    /// Every token the generator can emit, after pad and unk.
    pub fn vocab(&self) -> Result<Vocab> {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend((0..self.triggers).map(Self::trigger_token));
        for s in 0..self.classes {
            tokens.extend((0..self.cues_per_sense).map(|j| Self::cue_token(s, j)));
        }
        tokens.extend((0..self.fillers()).map(Self::filler_token));
        Vocab::from_tokens(tokens)
    }

    /// Probability of sense `s` given label `y`.
    pub fn sense_given_label(&self, s: usize, y: usize) -> f64 {
        let c = self.classes as f64;
        (1.0 - self.noise) * f64::from(u8::from(s == y)) + self.noise / c
    }
}

#[derive(Debug, Clone)]
pub struct SynthTask {
    pub spec: SynthTaskSpec,
    pub train: Corpus,
    pub test: Corpus,
    pub bayes: BayesReport,
    pub vocab: Vocab,
}

fn draw_sense(spec: &SynthTaskSpec, label: usize, rng: &mut AdeRng) -> usize {
    if spec.noise > 0.0 && rng.gen::<f64>() < spec.noise {
        rng.gen_range(0..spec.classes)
    } else {
        label
    }
}

fn sample_text(spec: &SynthTaskSpec, label: usize, rng: &mut AdeRng) -> String {
    let sense = draw_sense(spec, label, rng);
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    let p = rng.gen_range(0..len);
    let cue_pos = if p == 0 {
        1
    } else if p == len - 1 || rng.gen_bool(0.5) {
        p - 1
    } else {
        p + 1
    };
    let far: Vec<usize> = (0..len).filter(|&q| q.abs_diff(p) >= 3).collect();
    let distractor_pos = far[rng.gen_range(0..far.len())];
    let other = (sense + rng.gen_range(1..spec.classes)) % spec.classes;
    let mut tokens: Vec<String> = (0..len)
        .map(|_| SynthTaskSpec::filler_token(rng.gen_range(0..spec.fillers())))
        .collect();
    tokens[p] = SynthTaskSpec::trigger_token(rng.gen_range(0..spec.triggers));
    tokens[cue_pos] = SynthTaskSpec::cue_token(sense, rng.gen_range(0..spec.cues_per_sense));
    tokens[distractor_pos] = SynthTaskSpec::cue_token(other, rng.gen_range(0..spec.cues_per_sense));
    tokens.join(" ")
}

fn generate_split(spec: &SynthTaskSpec, size: usize, split: Split, rng: &mut AdeRng) -> Result<Corpus> {
    let mut labels: Vec<usize> = (0..size).map(|i| i % spec.classes).collect();
    labels.shuffle(rng);
    let records = labels
        .into_iter()
        .map(|label| Record { text: sample_text(spec, label, rng), label })
        .collect();
    let names = (0..spec.classes).map(|c| format!("sense{c}")).collect();
    Corpus::new(records, names, split)
}

pub fn synth_polysemy(spec: &SynthTaskSpec) -> Result<SynthTask> {
    spec.validate()?;
    let train = generate_split(spec, spec.train_size, Split::Train, &mut substream(spec.seed, 11))?;
    let test = generate_split(spec, spec.test_size, Split::Test, &mut substream(spec.seed, 12))?;
    Ok(SynthTask {
        spec: spec.clone(),
        train,
        test,
        bayes: spec.bayes(),
        vocab: spec.vocab()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;

    #[test]
    fn every_sample_has_adjacent_cue_of_label_sense() {
        let spec = SynthTaskSpec { train_size: 200, test_size: 10, ..Default::default() };
        let task = synth_polysemy(&spec).unwrap();
        for r in &task.train.records {
            let toks = tokenize(&r.text);
            let p = toks.iter().position(|t| t.starts_with("trig")).unwrap();
            let adj: Vec<&String> = [p.wrapping_sub(1), p + 1].iter().filter_map(|&q| toks.get(q)).collect();
            let prefix = format!("sense{}cue", r.label);
            assert!(adj.iter().any(|t| t.starts_with(&prefix)), "{}", r.text);
            assert_eq!(toks.iter().filter(|t| t.starts_with("sense")).count(), 2);
        }
    }

    #[test]
    fn classes_balanced_and_deterministic() {
        let spec = SynthTaskSpec { train_size: 103, test_size: 50, ..Default::default() };
        let a = synth_polysemy(&spec).unwrap();
        for counts in [a.train.class_counts(), a.test.class_counts()] {
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
        let b = synth_polysemy(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn bayes_rates() {
        let r = SynthTaskSpec::default().bayes();
        assert_eq!(r.context_aware, 1.0);
        assert_eq!(r.context_free, 0.5);
        let r = SynthTaskSpec { noise: 1.0, ..Default::default() }.bayes();
        assert_eq!(r.context_aware, 0.25);
        assert_eq!(r.context_free, 0.25);
    }

    #[test]
    fn infeasible_specs_rejected() {
        for spec in [
            SynthTaskSpec { cues_per_sense: 0, ..Default::default() },
            SynthTaskSpec { classes: 1, ..Default::default() },
            SynthTaskSpec { vocab_size: 16, ..Default::default() },
            SynthTaskSpec { min_len: 5, ..Default::default() },
            SynthTaskSpec { noise: 1.5, ..Default::default() },
        ] {
            assert!(matches!(synth_polysemy(&spec), Err(AdeError::Config(_))));
        }
    }

    #[test]
    fn vocab_covers_generated_tokens() {
        let task = synth_polysemy(&SynthTaskSpec { train_size: 100, test_size: 10, ..Default::default() }).unwrap();
        for r in &task.train.records {
            for t in tokenize(&r.text) {
                assert_ne!(task.vocab.id(&t), crate::data::UNK_ID);
            }
        }
    }
}
