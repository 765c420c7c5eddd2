//! Command-line front end.
//!
//! Each subcommand resolves a serializable job description (defaults, then an
//! optional TOML/JSON config file or manifest, then flags), runs it, and
//! writes its artifacts together with a [`RunManifest`].

mod config;

pub use config::{base_config, load_config, RunManifest};

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::binio::sha256_hex;
use crate::codebook::{
    compression_report, read_codebook, write_codebook, AnchorMatrix, CompressionInput, SparseCodebook, StorageLayout,
};
use crate::data::{build_vocab, encode_corpus, load_csv, CsvSchema, EncodedDataset, Split, SynthTaskSpec, Vocab};
use crate::distill::{
    distill_codebook, sparse_reconstruction, mean_cosine, synth_task_teacher, synthetic_teacher, DistillConfig,
    SyntheticTeacherSpec, TeacherEmbedding,
};
use crate::error::{AdeError, Result};
use crate::evalbench::{
    classification_metrics, format_compression_table, format_latency, format_metrics, format_param_table,
    format_sweep_table, latency_bench, prepare_codebook, prepare_task, run_ablation_sweep, threads_from_env,
    ExperimentConfig,
};
use crate::pipeline::{checkpoint_load, checkpoint_save, predict, train_classifier, AdeModel};
use crate::sat::{count_params, ParamConfig};

#[derive(Debug, Parser)]
#[command(name = "ade", version, about = "Adaptive dictionary embeddings: distil, train, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn anchors from a teacher embedding and write a sparse codebook
    Distill(DistillArgs),
    /// Train a classifier and write a checkpoint plus held-out metrics
    Train(TrainArgs),
    /// Score a checkpoint on a labelled split
    Eval(EvalArgs),
    /// With/without-attention sweep over anchor counts and seeds
    Sweep(SweepArgs),
    /// Parameter and compression tables
    Report(ReportArgs),
    /// Forward-pass latency
    Bench(BenchArgs),
    /// Write the synthetic polysemy task as CSV
    SynthData(SynthDataArgs),
}

/// Exit status for an error class: 2 configuration, 3 numeric, 4 data.
pub fn exit_code(err: &AdeError) -> i32 {
    match err {
        AdeError::Config(_) => 2,
        AdeError::Diverged { .. } | AdeError::GradCheck { .. } => 3,
        AdeError::Shape(_)
        | AdeError::Index(_)
        | AdeError::Contract(_)
        | AdeError::Corrupt(_)
        | AdeError::Data(_)
        | AdeError::Io(_) => 4,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status. Errors go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Distill(a) => cmd_distill(a.resolve()?, out),
        Command::Train(a) => cmd_train(a.resolve()?, out),
        Command::Eval(a) => cmd_eval(a.resolve()?, out),
        Command::Sweep(a) => cmd_sweep(a.resolve()?, out),
        Command::Report(a) => cmd_report(a.resolve()?, out),
        Command::Bench(a) => cmd_bench(a.resolve()?, out),
        Command::SynthData(a) => cmd_synth_data(a.resolve()?, out),
    }
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<()> {
    out.write_all(text.as_ref().as_bytes())?;
    Ok(())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| AdeError::config(e.to_string()))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

// ---------------------------------------------------------------- shared flags

#[derive(Debug, Clone, Default, Args)]
pub struct TaskFlags {
    #[arg(long)]
    pub classes: Option<usize>,
    /// task token types, excluding <pad> and <unk>
    #[arg(long = "task-vocab")]
    pub task_vocab: Option<usize>,
    #[arg(long)]
    pub triggers: Option<usize>,
    #[arg(long = "cues-per-sense")]
    pub cues_per_sense: Option<usize>,
    #[arg(long = "min-len")]
    pub min_len: Option<usize>,
    #[arg(long = "max-len")]
    pub max_len: Option<usize>,
    /// label noise η
    #[arg(long = "label-noise")]
    pub noise: Option<f64>,
    #[arg(long = "train-size")]
    pub train_size: Option<usize>,
    #[arg(long = "test-size")]
    pub test_size: Option<usize>,
}

impl TaskFlags {
    fn apply(&self, t: &mut SynthTaskSpec) {
        set(&mut t.classes, self.classes);
        set(&mut t.vocab_size, self.task_vocab);
        set(&mut t.triggers, self.triggers);
        set(&mut t.cues_per_sense, self.cues_per_sense);
        set(&mut t.min_len, self.min_len);
        set(&mut t.max_len, self.max_len);
        set(&mut t.noise, self.noise);
        set(&mut t.train_size, self.train_size);
        set(&mut t.test_size, self.test_size);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// static composition: skip the attention block
    #[arg(long = "no-sat")]
    pub no_sat: bool,
    /// keep anchors and anchor weights fixed during training
    #[arg(long = "freeze-embeddings")]
    pub freeze_embeddings: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long = "weight-decay")]
    pub weight_decay: Option<f64>,
    #[arg(long = "distill-steps")]
    pub distill_steps: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
}

impl ModelFlags {
    fn apply(&self, e: &mut ExperimentConfig) {
        set(&mut e.model.dim, self.dim);
        set(&mut e.model.heads, self.heads);
        set(&mut e.model.dropout, self.dropout);
        if self.no_sat {
            e.model.use_sat = false;
        }
        if self.freeze_embeddings {
            e.model.trainable_embeddings = false;
        }
        set(&mut e.train.total_steps, self.steps);
        set(&mut e.train.learning_rate, self.learning_rate);
        set(&mut e.train.warmup_steps, self.warmup);
        set(&mut e.train.batch_size, self.batch_size);
        set(&mut e.train.weight_decay, self.weight_decay);
        set(&mut e.distill.steps, self.distill_steps);
        set(&mut e.tau, self.tau);
        sync_flags(e);
    }
}

/// The model and trainer each carry the attention and trainability switches;
/// either one turning a feature off turns it off for both.
fn sync_flags(e: &mut ExperimentConfig) {
    let use_sat = e.model.use_sat && e.train.use_sat;
    let trainable = e.model.trainable_embeddings && e.train.trainable_embeddings;
    e.model.use_sat = use_sat;
    e.train.use_sat = use_sat;
    e.model.trainable_embeddings = trainable;
    e.train.trainable_embeddings = trainable;
}

fn seed_experiment(e: &mut ExperimentConfig, seed: u64) {
    e.task.seed = seed;
    e.train.seed = seed;
    e.distill.seed = seed;
    e.teacher_seed = seed;
}

/// A labelled CSV train/test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvJob {
    pub train: Option<String>,
    pub test: Option<String>,
    pub schema: CsvSchema,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl Default for CsvJob {
    fn default() -> Self {
        Self { train: None, test: None, schema: CsvSchema::ag_news(), vocab_size: 20_000, max_len: 128 }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CsvFlags {
    #[arg(long = "train-csv")]
    pub train_csv: Option<String>,
    #[arg(long = "test-csv")]
    pub test_csv: Option<String>,
    /// column layout: ag_news, dbpedia or labelled_text (label,text with header)
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long = "vocab-size")]
    pub vocab_size: Option<usize>,
    #[arg(long = "seq-len")]
    pub seq_len: Option<usize>,
}

impl CsvFlags {
    fn apply(&self, c: &mut CsvJob) -> Result<()> {
        if let Some(p) = &self.preset {
            c.schema = CsvSchema::preset(p)?;
        }
        if self.train_csv.is_some() {
            c.train = self.train_csv.clone();
        }
        if self.test_csv.is_some() {
            c.test = self.test_csv.clone();
        }
        set(&mut c.vocab_size, self.vocab_size);
        set(&mut c.max_len, self.seq_len);
        Ok(())
    }
}

/// Comma-separated list; an empty string is an empty list.
fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| AdeError::config(format!("cannot parse list item `{p}`"))))
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| AdeError::data(format!("cannot read {}: {e}", path.display())))
}

fn load_codebook_file(path: &Path) -> Result<(SparseCodebook, AnchorMatrix, f64, Vec<u8>)> {
    let bytes = read_file(path)?;
    let (cb, anchors, tau) = read_codebook(&bytes)?;
    Ok((cb, anchors, tau, bytes))
}

// ---------------------------------------------------------------- distill

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSource {
    /// a teacher embedding file
    File,
    /// random cluster-structured teacher
    Synthetic,
    /// role-structured teacher over the synthetic task vocabulary
    SynthTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillJob {
    pub source: Option<TeacherSource>,
    pub teacher_path: Option<String>,
    pub synthetic: SyntheticTeacherSpec,
    pub task: SynthTaskSpec,
    pub teacher_offset: f64,
    pub distill: DistillConfig,
    pub tau: f64,
    pub out: String,
    /// also write the teacher that was distilled
    pub save_teacher: Option<String>,
}

impl Default for DistillJob {
    fn default() -> Self {
        Self {
            source: None,
            teacher_path: None,
            synthetic: SyntheticTeacherSpec::default(),
            task: SynthTaskSpec::default(),
            teacher_offset: 0.5,
            distill: DistillConfig::default(),
            tau: 0.1,
            out: "codebook.adecb".into(),
            save_teacher: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    /// teacher embedding file (ADETE1)
    #[arg(long)]
    pub teacher: Option<String>,
    /// generate a cluster-structured teacher instead of reading one
    #[arg(long, conflicts_with_all = ["teacher", "synth_task"])]
    pub synthetic: bool,
    /// teacher over the synthetic task vocabulary
    #[arg(long = "synth-task", conflicts_with = "teacher")]
    pub synth_task: bool,
    #[arg(long = "num-words")]
    pub num_words: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long = "teacher-noise")]
    pub teacher_noise: Option<f64>,
    #[arg(short = 'k', long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: Option<String>,
    #[arg(long = "save-teacher")]
    pub save_teacher: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl DistillArgs {
    pub fn resolve(&self) -> Result<DistillJob> {
        let mut j: DistillJob = base_config(self.config.as_deref())?;
        if let Some(p) = &self.teacher {
            j.teacher_path = Some(p.clone());
            j.source = Some(TeacherSource::File);
        }
        if self.synthetic {
            j.source = Some(TeacherSource::Synthetic);
        }
        if self.synth_task {
            j.source = Some(TeacherSource::SynthTask);
        }
        set(&mut j.synthetic.num_words, self.num_words);
        set(&mut j.synthetic.dim, self.dim);
        set(&mut j.synthetic.clusters, self.clusters);
        set(&mut j.synthetic.noise, self.teacher_noise);
        set(&mut j.distill.num_anchors, self.anchors);
        set(&mut j.distill.steps, self.steps);
        set(&mut j.distill.learning_rate, self.learning_rate);
        set(&mut j.distill.sparsity, self.sparsity);
        if self.batch_size.is_some() {
            j.distill.batch_size = self.batch_size;
        }
        set(&mut j.tau, self.tau);
        if let Some(s) = self.seed {
            j.synthetic.seed = s;
            j.distill.seed = s;
        }
        set(&mut j.out, self.out.clone());
        if self.save_teacher.is_some() {
            j.save_teacher = self.save_teacher.clone();
        }
        Ok(j)
    }
}

pub fn cmd_distill(job: DistillJob, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("distill", &job, job.distill.seed)?;
    let teacher: TeacherEmbedding = match job.source {
        Some(TeacherSource::File) => {
            let path = job
                .teacher_path
                .as_deref()
                .ok_or_else(|| AdeError::config("teacher source `file` needs a teacher path"))?;
            let bytes = read_file(Path::new(path))?;
            manifest.input_bytes("teacher_file", &bytes);
            TeacherEmbedding::from_bytes(&bytes)?
        }
        Some(TeacherSource::Synthetic) => synthetic_teacher(&job.synthetic)?.teacher,
        Some(TeacherSource::SynthTask) => {
            synth_task_teacher(&job.task, job.synthetic.dim, job.teacher_offset, job.synthetic.seed)?
        }
        None => return Err(AdeError::config("no teacher given: pass --teacher PATH, --synthetic or --synth-task")),
    };
    manifest.input_hash("teacher", format!("{:016x}", teacher.hash()));
    if let Some(p) = &job.save_teacher {
        let bytes = teacher.to_bytes();
        std::fs::write(p, &bytes)?;
        manifest.artifact(Path::new(p), &bytes);
    }
    let t0 = Instant::now();
    let dc = distill_codebook(&teacher, &job.distill, job.tau)?;
    manifest.timing("distill", ms_since(t0));
    let bytes = write_codebook(&dc.codebook, &dc.outcome.anchors, job.tau)?;
    let out_path = PathBuf::from(&job.out);
    std::fs::write(&out_path, &bytes)?;
    manifest.artifact(&out_path, &bytes);
    manifest.timing("total", ms_since(start));
    manifest.write_next_to(&out_path)?;
    say(
        out,
        format!(
            "teacher {} x {}  K {}  steps {}\nfinal mean cosine {:.4} (dense)  {:.4} (sparse, tau {})\nmean cardinality {:.2}\nwrote {}  sha256 {}\n",
            teacher.num_words(),
            teacher.dim(),
            job.distill.num_anchors,
            job.distill.steps,
            dc.outcome.final_mean_cosine,
            dc.sparse_mean_cosine,
            job.tau,
            dc.codebook.mean_cardinality(),
            out_path.display(),
            sha256_hex(&bytes)
        ),
    )
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainJob {
    pub experiment: ExperimentConfig,
    /// anchors to distil when no codebook file is given
    pub num_anchors: usize,
    pub codebook: Option<String>,
    /// when set, train on CSV data instead of the synthetic task
    pub csv: Option<CsvJob>,
    pub out: String,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self { experiment: ExperimentConfig::default(), num_anchors: 16, codebook: None, csv: None, out: "model.ade".into() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// codebook file (.adecb); distilled on the fly when absent
    #[arg(long)]
    pub codebook: Option<String>,
    /// use the synthetic polysemy task (the default when no CSV is given)
    #[arg(long = "synth-task", conflicts_with = "train_csv")]
    pub synth_task: bool,
    #[command(flatten)]
    pub csv: CsvFlags,
    #[command(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(short = 'k', long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainJob> {
        let mut j: TrainJob = base_config(self.config.as_deref())?;
        if self.synth_task {
            j.csv = None;
        } else if self.csv.train_csv.is_some() || j.csv.is_some() {
            let mut c = j.csv.take().unwrap_or_default();
            self.csv.apply(&mut c)?;
            j.csv = Some(c);
        }
        self.task.apply(&mut j.experiment.task);
        self.model.apply(&mut j.experiment);
        sync_flags(&mut j.experiment);
        set(&mut j.num_anchors, self.anchors);
        if let Some(s) = self.seed {
            seed_experiment(&mut j.experiment, s);
        }
        if self.codebook.is_some() {
            j.codebook = self.codebook.clone();
        }
        set(&mut j.out, self.out.clone());
        Ok(j)
    }
}

/// Train and test splits plus everything needed to build the model.
struct Dataset {
    train: EncodedDataset,
    test: EncodedDataset,
    vocab: Vocab,
    classes: usize,
}

fn csv_paths(c: &CsvJob) -> Result<(&str, &str)> {
    match (c.train.as_deref(), c.test.as_deref()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(AdeError::config("CSV training needs both --train-csv and --test-csv")),
    }
}

fn load_csv_dataset(c: &CsvJob, manifest: &mut RunManifest) -> Result<Dataset> {
    let (train_path, test_path) = csv_paths(c)?;
    let train_c = load_csv(Path::new(train_path), &c.schema, Split::Train, None)?;
    let test_c = load_csv(Path::new(test_path), &c.schema, Split::Test, Some(&train_c.label_names))?;
    let vocab = build_vocab(&train_c, c.vocab_size)?;
    let train = encode_corpus(&train_c, &vocab, c.max_len)?;
    let test = encode_corpus(&test_c, &vocab, c.max_len)?;
    manifest.input_hash("train_data", train.content_hash());
    manifest.input_hash("test_data", test.content_hash());
    Ok(Dataset { classes: train_c.num_classes(), train, test, vocab })
}

pub fn cmd_train(job: TrainJob, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let e = &job.experiment;
    e.train.validate()?;
    let mut manifest = RunManifest::new("train", &job, e.train.seed)?;

    let data = match &job.csv {
        Some(c) => load_csv_dataset(c, &mut manifest)?,
        None => {
            let p = prepare_task(e)?;
            manifest.input_hash("train_data", p.train.content_hash());
            manifest.input_hash("test_data", p.test.content_hash());
            Dataset { classes: e.task.classes, train: p.train, test: p.test, vocab: p.task.vocab }
        }
    };

    let t0 = Instant::now();
    let (cb, anchors) = match &job.codebook {
        Some(path) => {
            let (cb, anchors, _, bytes) = load_codebook_file(Path::new(path))?;
            manifest.input_bytes("codebook", &bytes);
            (cb, anchors)
        }
        None if job.csv.is_none() => {
            let dc = prepare_codebook(e, job.num_anchors)?;
            (dc.codebook, dc.outcome.anchors)
        }
        None => {
            let spec = SyntheticTeacherSpec {
                num_words: data.vocab.len(),
                dim: e.model.dim,
                clusters: job.num_anchors,
                seed: e.teacher_seed,
                ..Default::default()
            };
            let teacher = synthetic_teacher(&spec)?.teacher;
            let dcfg = DistillConfig { num_anchors: job.num_anchors, ..e.distill.clone() };
            let dc = distill_codebook(&teacher, &dcfg, e.tau)?;
            (dc.codebook, dc.outcome.anchors)
        }
    };
    manifest.timing("codebook", ms_since(t0));
    if cb.num_words() != data.vocab.len() {
        return Err(AdeError::data(format!(
            "codebook covers {} words but the vocabulary has {}",
            cb.num_words(),
            data.vocab.len()
        )));
    }
    if anchors.dim() != e.model.dim {
        return Err(AdeError::config(format!("codebook dimension {} but model dimension {}", anchors.dim(), e.model.dim)));
    }

    let mcfg = crate::pipeline::ModelConfig { classes: data.classes, ..e.model.clone() };
    let model = AdeModel::new(mcfg, cb, anchors, e.train.seed)?.with_vocab(data.vocab)?;
    let t1 = Instant::now();
    let (model, history) = train_classifier(&model, &data.train, &e.train)?;
    manifest.timing("train", ms_since(t1));
    let preds = predict(&model, &data.test, 256)?;
    let metrics = classification_metrics(&preds, &data.test.labels, data.classes)?;

    let out_path = PathBuf::from(&job.out);
    let bytes = checkpoint_save(&model, &out_path)?;
    manifest.artifact(&out_path, &bytes);
    let mut metrics_path = out_path.clone().into_os_string();
    metrics_path.push(".metrics.json");
    let metrics_path = PathBuf::from(metrics_path);
    let metrics_json = to_json(&metrics)?;
    std::fs::write(&metrics_path, &metrics_json)?;
    manifest.artifact(&metrics_path, metrics_json.as_bytes());
    manifest.timing("total", ms_since(start));
    manifest.write_next_to(&out_path)?;

    let last = history.steps.len().saturating_sub(1);
    say(
        out,
        format!(
            "attention {}  embeddings {}  steps {}  final loss {:.4}\n",
            if e.model.use_sat { "on" } else { "off" },
            if e.model.trainable_embeddings { "trainable" } else { "frozen" },
            e.train.total_steps,
            history.smoothed(last, 50)
        ),
    )?;
    say(out, format_metrics(&metrics))?;
    say(out, format!("wrote {}\n", out_path.display()))
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalJob {
    pub checkpoint: Option<String>,
    pub task: SynthTaskSpec,
    /// CSV test split; the checkpoint's vocabulary encodes it
    pub csv: Option<CsvJob>,
    pub batch_size: usize,
    pub out: Option<String>,
}

impl Default for EvalJob {
    fn default() -> Self {
        Self { checkpoint: None, task: SynthTaskSpec::default(), csv: None, batch_size: 256, out: None }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long = "test-csv")]
    pub test_csv: Option<String>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long = "seq-len")]
    pub seq_len: Option<usize>,
    #[command(flatten)]
    pub task: TaskFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    /// write the metrics as JSON
    #[arg(short, long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl EvalArgs {
    pub fn resolve(&self) -> Result<EvalJob> {
        let mut j: EvalJob = base_config(self.config.as_deref())?;
        if self.checkpoint.is_some() {
            j.checkpoint = self.checkpoint.clone();
        }
        if self.test_csv.is_some() {
            let mut c = j.csv.take().unwrap_or_default();
            c.test = self.test_csv.clone();
            if let Some(p) = &self.preset {
                c.schema = CsvSchema::preset(p)?;
            }
            set(&mut c.max_len, self.seq_len);
            j.csv = Some(c);
        }
        self.task.apply(&mut j.task);
        if let Some(s) = self.seed {
            j.task.seed = s;
        }
        if self.out.is_some() {
            j.out = self.out.clone();
        }
        Ok(j)
    }
}

pub fn cmd_eval(job: EvalJob, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let path = job.checkpoint.as_deref().ok_or_else(|| AdeError::config("eval needs --checkpoint"))?;
    let mut manifest = RunManifest::new("eval", &job, job.task.seed)?;
    let bytes = read_file(Path::new(path))?;
    manifest.input_bytes("checkpoint", &bytes);
    let model = crate::pipeline::decode_checkpoint(&bytes)?;
    let test = match &job.csv {
        Some(c) => {
            let test_path = c.test.as_deref().ok_or_else(|| AdeError::config("CSV evaluation needs --test-csv"))?;
            let vocab = model
                .vocab
                .as_ref()
                .ok_or_else(|| AdeError::data("checkpoint carries no vocabulary; cannot encode CSV text"))?;
            let corpus = load_csv(Path::new(test_path), &c.schema, Split::Test, None)?;
            encode_corpus(&corpus, vocab, c.max_len)?
        }
        None => {
            let cfg = ExperimentConfig { task: job.task.clone(), ..Default::default() };
            let p = prepare_task(&cfg)?;
            if p.task.vocab.len() != model.codebook.num_words() {
                return Err(AdeError::data(format!(
                    "checkpoint covers {} words but the task vocabulary has {}",
                    model.codebook.num_words(),
                    p.task.vocab.len()
                )));
            }
            p.test
        }
    };
    manifest.input_hash("test_data", test.content_hash());
    if test.num_classes > model.config.classes {
        return Err(AdeError::data(format!(
            "test data has {} classes but the model predicts {}",
            test.num_classes, model.config.classes
        )));
    }
    let preds = predict(&model, &test, job.batch_size.max(1))?;
    let metrics = classification_metrics(&preds, &test.labels, model.config.classes)?;
    say(out, format_metrics(&metrics))?;
    if let Some(o) = &job.out {
        let text = to_json(&metrics)?;
        std::fs::write(o, &text)?;
        manifest.artifact(Path::new(o), text.as_bytes());
        manifest.timing("total", ms_since(start));
        manifest.write_next_to(Path::new(o))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepJob {
    pub experiment: ExperimentConfig,
    pub anchor_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out: String,
}

impl Default for SweepJob {
    fn default() -> Self {
        Self { experiment: ExperimentConfig::default(), anchor_counts: vec![8, 16, 32], seeds: vec![0, 1, 2], out: "sweep.json".into() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// comma-separated anchor counts
    #[arg(short = 'k', long)]
    pub anchors: Option<String>,
    /// comma-separated training seeds
    #[arg(long)]
    pub seeds: Option<String>,
    #[command(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    /// data, teacher and distillation seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SweepArgs {
    pub fn resolve(&self) -> Result<SweepJob> {
        let mut j: SweepJob = base_config(self.config.as_deref())?;
        if let Some(a) = &self.anchors {
            j.anchor_counts = parse_list(a)?;
        }
        if let Some(a) = &self.seeds {
            j.seeds = parse_list(a)?;
        }
        self.task.apply(&mut j.experiment.task);
        self.model.apply(&mut j.experiment);
        if let Some(s) = self.seed {
            seed_experiment(&mut j.experiment, s);
        }
        set(&mut j.out, self.out.clone());
        Ok(j)
    }
}

pub fn cmd_sweep(job: SweepJob, out: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("sweep", &job, job.experiment.task.seed)?;
    let result = run_ablation_sweep(&job.experiment, &job.anchor_counts, &job.seeds, threads_from_env())?;
    say(out, format_sweep_table(&result))?;
    for c in result.cells.iter().filter(|c| c.error.is_some()) {
        say(
            out,
            format!("failed: K {} attention {} seed {}: {}\n", c.num_anchors, c.use_sat, c.seed, c.error.as_deref().unwrap_or("")),
        )?;
    }
    let out_path = PathBuf::from(&job.out);
    let text = to_json(&result)?;
    std::fs::write(&out_path, &text)?;
    manifest.artifact(&out_path, text.as_bytes());
    for c in &result.cells {
        manifest.timing(&format!("cell k={} sat={} seed={}", c.num_anchors, c.use_sat, c.seed), c.runtime_ms);
    }
    manifest.timing("total", ms_since(start));
    manifest.write_next_to(&out_path)?;
    if result.all_failed() {
        let first = result.cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(AdeError::Diverged { step: 0, detail: format!("every sweep cell failed; first: {first}") });
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsJob {
    pub dim: usize,
    pub heads: usize,
    pub classes: usize,
    pub num_anchors: usize,
    pub codebook_entries: usize,
    pub trainable_embeddings: bool,
}

impl Default for ParamsJob {
    fn default() -> Self {
        Self { dim: 768, heads: 12, classes: 4, num_anchors: 100, codebook_entries: 1_076_040, trainable_embeddings: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionJob {
    pub anchor_counts: Vec<usize>,
    pub num_words: u64,
    pub dim: u64,
    pub mean_cardinality: f64,
    pub layout: StorageLayout,
}

impl Default for CompressionJob {
    fn default() -> Self {
        Self {
            anchor_counts: vec![100, 200, 300, 500],
            num_words: 128_100,
            dim: 768,
            mean_cardinality: 8.4,
            layout: StorageLayout::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportJob {
    pub show_params: bool,
    pub show_compression: bool,
    pub checkpoint: Option<String>,
    pub params: ParamsJob,
    pub compression: CompressionJob,
    pub out: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// per-component parameter table
    #[arg(long)]
    pub params: bool,
    /// embedding storage against a dense table
    #[arg(long)]
    pub compression: bool,
    /// report on a trained model instead of a hypothetical shape
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// comma-separated anchor counts (the first is used for --params)
    #[arg(short = 'k', long)]
    pub anchors: Option<String>,
    /// Σ k over the vocabulary, for --params
    #[arg(long)]
    pub entries: Option<usize>,
    #[arg(long = "trainable-embeddings")]
    pub trainable_embeddings: bool,
    #[arg(long = "num-words")]
    pub num_words: Option<u64>,
    #[arg(long = "avg-k")]
    pub avg_k: Option<f64>,
    #[arg(long = "index-bytes")]
    pub index_bytes: Option<u64>,
    #[arg(long = "weight-bytes")]
    pub weight_bytes: Option<u64>,
    #[arg(long = "cardinality-bytes")]
    pub cardinality_bytes: Option<u64>,
    /// also write the tables as JSON
    #[arg(short, long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ReportArgs {
    pub fn resolve(&self) -> Result<ReportJob> {
        let mut j: ReportJob = base_config(self.config.as_deref())?;
        j.show_params |= self.params;
        j.show_compression |= self.compression;
        if !j.show_params && !j.show_compression {
            j.show_params = true;
            j.show_compression = true;
        }
        if self.checkpoint.is_some() {
            j.checkpoint = self.checkpoint.clone();
        }
        if let Some(d) = self.dim {
            j.params.dim = d;
            j.compression.dim = d as u64;
        }
        set(&mut j.params.heads, self.heads);
        set(&mut j.params.classes, self.classes);
        if let Some(a) = &self.anchors {
            let ks: Vec<usize> = parse_list(a)?;
            if ks.is_empty() {
                return Err(AdeError::config("empty anchor-count list"));
            }
            j.params.num_anchors = ks[0];
            j.compression.anchor_counts = ks;
        }
        set(&mut j.params.codebook_entries, self.entries);
        j.params.trainable_embeddings |= self.trainable_embeddings;
        set(&mut j.compression.num_words, self.num_words);
        set(&mut j.compression.mean_cardinality, self.avg_k);
        set(&mut j.compression.layout.index_bytes, self.index_bytes);
        set(&mut j.compression.layout.weight_bytes, self.weight_bytes);
        set(&mut j.compression.layout.cardinality_bytes, self.cardinality_bytes);
        if self.out.is_some() {
            j.out = self.out.clone();
        }
        Ok(j)
    }
}

/// Tables produced by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub params: Option<crate::sat::ParamTable>,
    pub compression: Vec<crate::codebook::CompressionReport>,
}

pub fn build_report(job: &ReportJob) -> Result<ReportOutput> {
    let (params, compression) = match &job.checkpoint {
        Some(path) => {
            let model = checkpoint_load(Path::new(path))?;
            let p = model.param_table()?;
            let c = compression_report(&CompressionInput::from_codebook(&model.codebook, model.dim(), job.compression.layout));
            (p, vec![c])
        }
        None => {
            let p = &job.params;
            let table = count_params(&ParamConfig {
                dim: p.dim,
                heads: p.heads,
                classes: p.classes,
                num_anchors: p.num_anchors,
                codebook_entries: p.codebook_entries,
                trainable_embeddings: p.trainable_embeddings,
            })?;
            let c = &job.compression;
            if c.anchor_counts.is_empty() {
                return Err(AdeError::config("empty anchor-count list"));
            }
            if !(c.mean_cardinality.is_finite() && c.mean_cardinality >= 0.0) || c.num_words == 0 || c.dim == 0 {
                return Err(AdeError::config("compression needs N ≥ 1, d ≥ 1 and a finite mean cardinality ≥ 0"));
            }
            let reports = c
                .anchor_counts
                .iter()
                .map(|&k| {
                    compression_report(&CompressionInput::with_mean_cardinality(
                        c.num_words,
                        c.dim,
                        k as u64,
                        c.mean_cardinality,
                        c.layout,
                    ))
                })
                .collect();
            (table, reports)
        }
    };
    Ok(ReportOutput {
        params: job.show_params.then_some(params),
        compression: if job.show_compression { compression } else { Vec::new() },
    })
}

pub fn cmd_report(job: ReportJob, out: &mut dyn Write) -> Result<()> {
    let report = build_report(&job)?;
    if let Some(p) = &report.params {
        say(out, format_param_table(p))?;
    }
    if !report.compression.is_empty() {
        if report.params.is_some() {
            say(out, "\n")?;
        }
        say(out, format_compression_table(&report.compression))?;
    }
    if let Some(o) = &job.out {
        let mut manifest = RunManifest::new("report", &job, 0)?;
        if let Some(c) = &job.checkpoint {
            manifest.input_bytes("checkpoint", &read_file(Path::new(c))?);
        }
        let text = to_json(&report)?;
        std::fs::write(o, &text)?;
        manifest.artifact(Path::new(o), text.as_bytes());
        manifest.write_next_to(Path::new(o))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchJob {
    /// checkpoint to time; an untrained synthetic-task model otherwise
    pub checkpoint: Option<String>,
    pub experiment: ExperimentConfig,
    pub num_anchors: usize,
    pub batch: usize,
    pub seq_len: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
    pub out: Option<String>,
}

impl Default for BenchJob {
    fn default() -> Self {
        Self {
            checkpoint: None,
            experiment: ExperimentConfig::default(),
            num_anchors: 16,
            batch: 32,
            seq_len: 128,
            warmup: 2,
            iters: 10,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(short = 'k', long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long = "no-sat")]
    pub no_sat: bool,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl BenchArgs {
    pub fn resolve(&self) -> Result<BenchJob> {
        let mut j: BenchJob = base_config(self.config.as_deref())?;
        if self.checkpoint.is_some() {
            j.checkpoint = self.checkpoint.clone();
        }
        set(&mut j.num_anchors, self.anchors);
        set(&mut j.experiment.model.dim, self.dim);
        set(&mut j.experiment.model.heads, self.heads);
        if self.no_sat {
            j.experiment.model.use_sat = false;
        }
        set(&mut j.batch, self.batch);
        set(&mut j.seq_len, self.len);
        set(&mut j.warmup, self.warmup);
        set(&mut j.iters, self.iters);
        if let Some(s) = self.seed {
            j.seed = s;
            seed_experiment(&mut j.experiment, s);
        }
        if self.out.is_some() {
            j.out = self.out.clone();
        }
        Ok(j)
    }
}

pub fn cmd_bench(job: BenchJob, out: &mut dyn Write) -> Result<()> {
    let mut manifest = RunManifest::new("bench", &job, job.seed)?;
    let model = match &job.checkpoint {
        Some(p) => {
            let bytes = read_file(Path::new(p))?;
            manifest.input_bytes("checkpoint", &bytes);
            crate::pipeline::decode_checkpoint(&bytes)?
        }
        None => {
            let e = &job.experiment;
            let dc = prepare_codebook(e, job.num_anchors)?;
            let mcfg = crate::pipeline::ModelConfig { classes: e.task.classes, ..e.model.clone() };
            AdeModel::new(mcfg, dc.codebook, dc.outcome.anchors, job.seed)?
        }
    };
    let report = latency_bench(&model, job.batch, job.seq_len, job.warmup, job.iters, job.seed)?;
    say(out, format_latency(&report))?;
    if let Some(o) = &job.out {
        let text = to_json(&report)?;
        std::fs::write(o, &text)?;
        manifest.artifact(Path::new(o), text.as_bytes());
        manifest.timing("ms_per_batch", report.ms_per_batch);
        manifest.write_next_to(Path::new(o))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- synth-data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDataJob {
    pub task: SynthTaskSpec,
    pub out_dir: String,
}

impl Default for SynthDataJob {
    fn default() -> Self {
        Self { task: SynthTaskSpec::default(), out_dir: "synth_data".into() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthDataArgs {
    #[command(flatten)]
    pub task: TaskFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long = "out-dir")]
    pub out_dir: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SynthDataArgs {
    pub fn resolve(&self) -> Result<SynthDataJob> {
        let mut j: SynthDataJob = base_config(self.config.as_deref())?;
        self.task.apply(&mut j.task);
        set(&mut j.task.seed, self.seed);
        set(&mut j.out_dir, self.out_dir.clone());
        Ok(j)
    }
}

fn corpus_csv(c: &crate::data::Corpus) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| AdeError::data(e.to_string());
    w.write_record(["label", "text"]).map_err(csv_err)?;
    for r in &c.records {
        w.write_record([c.label_names[r.label].as_str(), r.text.as_str()]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| AdeError::data(e.to_string()))
}

pub fn cmd_synth_data(job: SynthDataJob, out: &mut dyn Write) -> Result<()> {
    let task = crate::data::synth_polysemy(&job.task)?;
    let dir = PathBuf::from(&job.out_dir);
    std::fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new("synth-data", &job, job.task.seed)?;
    let files = [
        ("train.csv", corpus_csv(&task.train)?),
        ("test.csv", corpus_csv(&task.test)?),
        ("bayes.json", to_json(&task.bayes)?.into_bytes()),
    ];
    for (name, bytes) in &files {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        manifest.artifact(&p, bytes);
    }
    manifest.write_next_to(&dir.join("synth"))?;
    say(
        out,
        format!(
            "wrote {} train and {} test rows to {}\nBayes accuracy: context-aware {:.4}, context-free {:.4}\n",
            task.train.len(),
            task.test.len(),
            dir.display(),
            task.bayes.context_aware,
            task.bayes.context_free
        ),
    )
}

/// Sparse-reconstruction quality of a codebook file against a teacher.
pub fn codebook_fidelity(codebook: &Path, teacher: &TeacherEmbedding) -> Result<f64> {
    let (cb, anchors, _, _) = load_codebook_file(codebook)?;
    mean_cosine(&sparse_reconstruction(&cb, &anchors)?, teacher)
}
