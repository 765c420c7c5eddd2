//! Metrics, the with/without-attention sweep over anchor counts, latency
//! measurement and plain-text report tables.

mod metrics;
mod tables;

pub use metrics::{classification_metrics, ClassMetrics, MetricsReport};
pub use tables::{format_compression_table, format_latency, format_metrics, format_param_table, format_sweep_table};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::TokenBatch;
use crate::data::{encode_corpus, synth_polysemy, BayesReport, EncodedDataset, SynthTask, SynthTaskSpec};
use crate::distill::{distill_codebook, synth_task_teacher, DistillConfig, DistilledCodebook};
use crate::error::{AdeError, Result};
use crate::numcore::rng::substream;
use crate::pipeline::{predict, train_classifier, AdeModel, Mode, ModelConfig, TrainConfig, TrainHistory};

/// Everything needed to go from the synthetic task to a scored classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: SynthTaskSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    /// vocabulary-projection threshold
    pub tau: f64,
    /// per-token offset scale of the role-structured teacher
    pub teacher_offset: f64,
    pub teacher_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: SynthTaskSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            distill: DistillConfig { steps: 100, ..DistillConfig::default() },
            tau: 0.1,
            teacher_offset: 0.5,
            teacher_seed: 0,
        }
    }
}

/// The generated task and both encoded splits.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub task: SynthTask,
    pub train: EncodedDataset,
    pub test: EncodedDataset,
}

pub fn prepare_task(cfg: &ExperimentConfig) -> Result<PreparedTask> {
    let task = synth_polysemy(&cfg.task)?;
    let train = encode_corpus(&task.train, &task.vocab, cfg.task.max_len)?;
    let test = encode_corpus(&task.test, &task.vocab, cfg.task.max_len)?;
    Ok(PreparedTask { task, train, test })
}

/// Distils a codebook with `num_anchors` anchors for the task vocabulary.
pub fn prepare_codebook(cfg: &ExperimentConfig, num_anchors: usize) -> Result<DistilledCodebook> {
    let teacher = synth_task_teacher(&cfg.task, cfg.model.dim, cfg.teacher_offset, cfg.teacher_seed)?;
    let dcfg = DistillConfig { num_anchors, ..cfg.distill.clone() };
    distill_codebook(&teacher, &dcfg, cfg.tau)
}

/// Trained model, its loss history and held-out metrics.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: AdeModel,
    pub history: TrainHistory,
    pub metrics: MetricsReport,
}

/// Builds a model on `codebook`, trains it and scores the test split.
pub fn train_and_evaluate(
    cfg: &ExperimentConfig,
    prepared: &PreparedTask,
    codebook: &DistilledCodebook,
    use_sat: bool,
    seed: u64,
) -> Result<TrainedRun> {
    let mcfg = ModelConfig { classes: cfg.task.classes, use_sat, ..cfg.model.clone() };
    let model = AdeModel::new(mcfg, codebook.codebook.clone(), codebook.outcome.anchors.clone(), seed)?
        .with_vocab(prepared.task.vocab.clone())?;
    let tcfg = TrainConfig { use_sat, seed, ..cfg.train.clone() };
    let (model, history) = train_classifier(&model, &prepared.train, &tcfg)?;
    let preds = predict(&model, &prepared.test, 256)?;
    let metrics = classification_metrics(&preds, &prepared.test.labels, cfg.task.classes)?;
    Ok(TrainedRun { model, history, metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub num_anchors: usize,
    pub use_sat: bool,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    /// wall-clock time; left out of the serialized result so reruns hash equal
    #[serde(skip)]
    pub runtime_ms: f64,
}

/// One table row: a `(K, with/without attention)` cell averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_anchors: usize,
    pub use_sat: bool,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub anchor_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub bayes: BayesReport,
    pub cells: Vec<CellResult>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, num_anchors: usize, use_sat: bool) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.num_anchors == num_anchors && r.use_sat == use_sat)
    }

    /// Mean accuracy of the completed cells with the given flag.
    pub fn mean_accuracy(&self, use_sat: bool) -> f64 {
        let accs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.use_sat == use_sat)
            .filter_map(|c| c.metrics.as_ref().map(|m| m.accuracy))
            .collect();
        accs.iter().sum::<f64>() / accs.len().max(1) as f64
    }

    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.metrics.is_none())
    }
}

fn summarise(k: usize, use_sat: bool, cells: &[CellResult]) -> SweepRow {
    let done: Vec<&MetricsReport> = cells
        .iter()
        .filter(|c| c.num_anchors == k && c.use_sat == use_sat)
        .filter_map(|c| c.metrics.as_ref())
        .collect();
    let failed = cells.iter().filter(|c| c.num_anchors == k && c.use_sat == use_sat && c.metrics.is_none()).count();
    let n = done.len().max(1) as f64;
    let mean = |f: fn(&MetricsReport) -> f64| done.iter().map(|m| f(m)).sum::<f64>() / n;
    SweepRow {
        num_anchors: k,
        use_sat,
        accuracy: mean(|m| m.accuracy),
        f1: mean(|m| m.macro_f1),
        precision: mean(|m| m.macro_precision),
        recall: mean(|m| m.macro_recall),
        completed: done.len(),
        failed,
    }
}

/// Worker count from `ADE_THREADS` (default 1).
pub fn threads_from_env() -> usize {
    std::env::var("ADE_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n >= 1).unwrap_or(1)
}

/// Trains and scores every `(K, flag, seed)` cell on the synthetic task.
///
/// Cells are independent and single-threaded; up to `threads` of them run at
/// once. A failing cell is recorded and the sweep continues.
pub fn run_ablation_sweep(cfg: &ExperimentConfig, anchor_counts: &[usize], seeds: &[u64], threads: usize) -> Result<SweepResult> {
    if anchor_counts.is_empty() {
        return Err(AdeError::config("anchor-count list is empty"));
    }
    if seeds.is_empty() {
        return Err(AdeError::config("seed list is empty"));
    }
    let prepared = prepare_task(cfg)?;
    let codebooks: Vec<std::result::Result<DistilledCodebook, String>> =
        anchor_counts.iter().map(|&k| prepare_codebook(cfg, k).map_err(|e| e.to_string())).collect();
    let jobs: Vec<(usize, bool, u64)> = anchor_counts
        .iter()
        .enumerate()
        .flat_map(|(ki, _)| [true, false].into_iter().flat_map(move |f| seeds.iter().map(move |&s| (ki, f, s))))
        .collect();
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(ki, use_sat, seed)) = jobs.get(i) else { break };
        let start = Instant::now();
        let outcome = match &codebooks[ki] {
            Ok(cb) => train_and_evaluate(cfg, &prepared, cb, use_sat, seed).map(|r| r.metrics).map_err(|e| e.to_string()),
            Err(e) => Err(format!("distillation failed: {e}")),
        };
        let (metrics, error) = match outcome {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e)),
        };
        let cell = CellResult {
            num_anchors: anchor_counts[ki],
            use_sat,
            seed,
            metrics,
            error,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        results.lock().expect("no poisoned workers")[i] = Some(cell);
    };
    let threads = threads.clamp(1, jobs.len());
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let cells: Vec<CellResult> = results.into_inner().expect("no poisoned workers").into_iter().flatten().collect();
    let rows = anchor_counts
        .iter()
        .flat_map(|&k| [true, false].map(|f| summarise(k, f, &cells)))
        .collect();
    Ok(SweepResult {
        anchor_counts: anchor_counts.to_vec(),
        seeds: seeds.to_vec(),
        bayes: prepared.task.bayes,
        cells,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub batch: usize,
    pub seq_len: usize,
    pub iters: usize,
    /// median wall-clock milliseconds per batch
    pub ms_per_batch: f64,
    pub samples_per_sec: f64,
    /// anchors processed per batch, Σ k over the batch
    pub expanded_len: usize,
}

/// Times eval-mode forward passes over a random full-length batch.
pub fn latency_bench(model: &AdeModel, batch: usize, seq_len: usize, warmup: usize, iters: usize, seed: u64) -> Result<LatencyReport> {
    if iters == 0 || batch == 0 || seq_len == 0 {
        return Err(AdeError::config("latency bench needs batch, length and iterations ≥ 1"));
    }
    let n = model.codebook.num_words();
    let lo = if n > 2 { 2 } else { 0 };
    let mut rng = substream(seed, 0xBE);
    let ids: Vec<usize> = (0..batch * seq_len).map(|_| rng.gen_range(lo..n)).collect();
    let tokens = TokenBatch::new(ids, vec![true; batch * seq_len], batch, seq_len)?;
    let expanded_len = tokens.ids.iter().map(|&w| model.codebook.cardinality(w)).sum();
    for _ in 0..warmup {
        model.logits(&tokens, Mode::Eval)?;
    }
    let mut times = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        model.logits(&tokens, Mode::Eval)?;
        times.push((start.elapsed().as_secs_f64() * 1e3).max(1e-9));
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let ms = if times.len() % 2 == 1 { times[mid] } else { 0.5 * (times[mid - 1] + times[mid]) };
    Ok(LatencyReport {
        batch,
        seq_len,
        iters,
        ms_per_batch: ms,
        samples_per_sec: batch as f64 * 1000.0 / ms,
        expanded_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            task: SynthTaskSpec { train_size: 32, test_size: 16, ..Default::default() },
            train: TrainConfig { total_steps: 3, warmup_steps: 1, batch_size: 8, ..Default::default() },
            distill: DistillConfig { steps: 5, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn sweep_has_two_rows_per_k() {
        let r = run_ablation_sweep(&tiny(), &[4, 8], &[0], 1).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.cells.len(), 4);
        assert!(r.cells.iter().all(|c| c.metrics.is_some()));
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(matches!(run_ablation_sweep(&tiny(), &[], &[0], 1), Err(AdeError::Config(_))));
        assert!(matches!(run_ablation_sweep(&tiny(), &[4], &[], 1), Err(AdeError::Config(_))));
    }

    #[test]
    fn failed_cell_is_recorded() {
        // K = 0 cannot be distilled; the other K still runs
        let r = run_ablation_sweep(&tiny(), &[0, 4], &[0], 1).unwrap();
        assert_eq!(r.row(0, true).unwrap().failed, 1);
        assert_eq!(r.row(4, true).unwrap().completed, 1);
        assert!(!r.all_failed());
    }

    #[test]
    fn latency_reports_expanded_length() {
        let cfg = tiny();
        let cb = prepare_codebook(&cfg, 4).unwrap();
        let model = AdeModel::new(ModelConfig::default(), cb.codebook, cb.outcome.anchors, 0).unwrap();
        let r = latency_bench(&model, 2, 5, 1, 3, 0).unwrap();
        assert!(r.ms_per_batch > 0.0 && r.ms_per_batch.is_finite());
        assert!((r.samples_per_sec - 2.0 * 1000.0 / r.ms_per_batch).abs() < 1e-9);
        assert!(r.expanded_len >= 10);
        assert!(latency_bench(&model, 2, 5, 0, 0, 0).is_err());
    }
}
