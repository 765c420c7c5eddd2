//! The command-line contract: exit codes, manifests and reproducibility.

use std::path::{Path, PathBuf};

use ade::cli::{run, RunManifest};
use ade::codebook::{AnchorMatrix, SparseCodebook};
use ade::numcore::Tensor;
use ade::pipeline::{checkpoint_save, AdeModel, ModelConfig};

fn ade(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("ade").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifests(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    v.sort();
    v
}

fn manifest(path: &Path) -> RunManifest {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

const SMALL_TRAIN: &[&str] = &["--train-size", "64", "--test-size", "32", "--steps", "15", "--warmup", "3", "--distill-steps", "10"];

#[test]
fn distill_is_reproducible_from_flags_and_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.adecb");
    let b = dir.path().join("b.adecb");
    let flags = ["--synthetic", "--num-words", "120", "--dim", "8", "-k", "6", "--steps", "30", "--seed", "4"];
    let (code, text) = ade(&[&["distill", "--out", s(&a)], &flags[..]].concat());
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("final mean cosine"));
    assert_eq!(manifests(dir.path()).len(), 1);
    assert_eq!(ade(&[&["distill", "--out", s(&b)], &flags[..]].concat()).0, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let m = manifest(&a);
    assert_eq!(m.command, "distill");
    assert_eq!(m.seed, 4);
    assert!(m.inputs.contains_key("teacher"));
    let c = dir.path().join("c.adecb");
    let mf = dir.path().join("a.adecb.manifest.json");
    assert_eq!(ade(&["distill", "--config", s(&mf), "--out", s(&c)]).0, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    // the recorded hash names the artifact
    assert_eq!(m.artifacts[s(&a)], ade::binio::sha256_hex(&std::fs::read(&a).unwrap()));
}

#[test]
fn distill_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.adecb");
    assert_eq!(ade(&["distill", "--out", s(&out)]).0, 2);
    assert_eq!(ade(&["distill", "--teacher", s(&dir.path().join("missing")), "--out", s(&out)]).0, 4);
    assert_eq!(ade(&["distill", "--synthetic", "-k", "0", "--out", s(&out)]).0, 2);
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a teacher").unwrap();
    assert_eq!(ade(&["distill", "--teacher", s(&junk), "--out", s(&out)]).0, 4);
    assert!(!out.exists());
}

#[test]
fn distill_from_saved_teacher_file() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.bin");
    let a = dir.path().join("a.adecb");
    let b = dir.path().join("b.adecb");
    let common = ["--num-words", "50", "--dim", "8", "-k", "4", "--steps", "20"];
    assert_eq!(ade(&[&["distill", "--synthetic", "--save-teacher", s(&t), "--out", s(&a)], &common[..]].concat()).0, 0);
    assert_eq!(ade(&[&["distill", "--teacher", s(&t), "--out", s(&b)], &common[..]].concat()).0, 0);
    let c = dir.path().join("c.adecb");
    assert_eq!(ade(&[&["distill", "--teacher", s(&t), "--out", s(&c)], &common[..]].concat()).0, 0);
    assert_eq!(std::fs::read(&b).unwrap(), std::fs::read(&c).unwrap());
    // the file stores the teacher in single precision; the learned support is unchanged
    let (ca, aa, _) = ade::codebook::read_codebook(&std::fs::read(&a).unwrap()).unwrap();
    let (cb, ab, _) = ade::codebook::read_codebook(&std::fs::read(&b).unwrap()).unwrap();
    assert_eq!(ca.cardinalities(), cb.cardinalities());
    assert!(aa.values().max_abs_diff(ab.values()) < 1e-4);
}

#[test]
fn train_writes_checkpoint_metrics_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ade");
    let (code, text) = ade(&[&["train", "--synth-task", "--out", s(&a)], SMALL_TRAIN].concat());
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("accuracy"));
    assert_eq!(manifests(dir.path()).len(), 1);
    let m = manifest(&a);
    assert_eq!(m.artifacts.len(), 2);
    let metrics: ade::evalbench::MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.ade.metrics.json")).unwrap()).unwrap();

    let b = dir.path().join("b.ade");
    let mf = dir.path().join("a.ade.manifest.json");
    assert_eq!(ade(&["train", "--config", s(&mf), "--out", s(&b)]).0, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // eval of the saved checkpoint on the same split reproduces the metrics
    let ev = dir.path().join("ev.json");
    assert_eq!(ade(&["eval", "--checkpoint", s(&a), "--train-size", "64", "--test-size", "32", "--out", s(&ev)]).0, 0);
    let again: ade::evalbench::MetricsReport = serde_json::from_str(&std::fs::read_to_string(&ev).unwrap()).unwrap();
    assert_eq!(again.confusion, metrics.confusion);
}

#[test]
fn train_flag_conflicts_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ade");
    assert_eq!(ade(&["train", "--synth-task", "--steps", "10", "--warmup", "20", "--out", s(&out)]).0, 2);
    assert_eq!(ade(&["train", "--synth-task", "--heads", "3", "--steps", "5", "--warmup", "1", "--out", s(&out)]).0, 2);
    // codebook built for a different vocabulary size
    let cb = dir.path().join("cb.adecb");
    assert_eq!(ade(&["distill", "--synthetic", "--num-words", "30", "--dim", "16", "-k", "4", "--steps", "5", "--out", s(&cb)]).0, 0);
    assert_eq!(ade(&[&["train", "--synth-task", "--codebook", s(&cb), "--out", s(&out)], SMALL_TRAIN].concat()).0, 4);
    assert_eq!(ade(&["train", "--train-csv", s(&dir.path().join("nope.csv")), "--test-csv", "x", "--out", s(&out)]).0, 4);
    assert!(!out.exists());
}

#[test]
fn flags_beat_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.toml");
    std::fs::write(&cfg, "[experiment.train]\ntotal_steps = 12\nwarmup_steps = 2\n[experiment.task]\ntrain_size = 40\ntest_size = 20\n").unwrap();
    let out = dir.path().join("m.ade");
    assert_eq!(ade(&["train", "--config", s(&cfg), "--steps", "7", "--distill-steps", "5", "--out", s(&out)]).0, 0);
    let m = manifest(&out);
    assert_eq!(m.config["experiment"]["train"]["total_steps"], 7);
    assert_eq!(m.config["experiment"]["train"]["warmup_steps"], 2);
    assert_eq!(m.config["experiment"]["task"]["train_size"], 40);
}

#[test]
fn synth_data_then_csv_training() {
    let dir = tempfile::tempdir().unwrap();
    let d1 = dir.path().join("d1");
    let d2 = dir.path().join("d2");
    let sizes = ["--train-size", "80", "--test-size", "40"];
    assert_eq!(ade(&[&["synth-data", "--out-dir", s(&d1)], &sizes[..]].concat()).0, 0);
    assert_eq!(ade(&[&["synth-data", "--out-dir", s(&d2)], &sizes[..]].concat()).0, 0);
    for f in ["train.csv", "test.csv", "bayes.json"] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap());
    }
    assert_eq!(manifests(&d1).len(), 1);
    let out = dir.path().join("csv.ade");
    let (code, text) = ade(&[
        "train", "--train-csv", s(&d1.join("train.csv")), "--test-csv", s(&d1.join("test.csv")), "--preset", "labelled_text",
        "--steps", "10", "--warmup", "2", "--distill-steps", "5", "--out", s(&out),
    ]);
    assert_eq!(code, 0, "{text}");
    let (code, _) = ade(&["eval", "--checkpoint", s(&out), "--test-csv", s(&d1.join("test.csv")), "--preset", "labelled_text"]);
    assert_eq!(code, 0);
}

#[test]
fn sweep_table_rows_and_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.json");
    let (code, text) = ade(&[&["sweep", "-k", "8,16,32", "--seeds", "0", "--out", s(&out)], SMALL_TRAIN].concat());
    assert_eq!(code, 0, "{text}");
    let r: ade::evalbench::SweepResult = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert_eq!(manifests(dir.path()).len(), 1);
    assert_eq!(ade(&["sweep", "-k", "", "--out", s(&out)]).0, 2);
    assert_eq!(ade(&["sweep", "-k", "8,x", "--out", s(&out)]).0, 2);
}

#[test]
fn report_tables() {
    let (code, text) = ade(&["report", "--params", "--dim", "768", "--classes", "4"]);
    assert_eq!(code, 0);
    assert!(text.contains("2,367,749"));
    assert!(text.contains("2,362,368"));
    let (code, text) = ade(&["report", "--compression", "-k", "100", "--dim", "768", "--num-words", "128100", "--avg-k", "8.4"]);
    assert_eq!(code, 0);
    assert!(text.contains("42.91x"), "{text}");
    assert_eq!(ade(&["report", "--compression", "--avg-k", "nan"]).0, 2);
    assert_eq!(ade(&["report", "--params", "--dim", "10", "--heads", "3"]).0, 2);
}

#[test]
fn bench_reports_expanded_length() {
    let dir = tempfile::tempdir().unwrap();
    // every word has exactly three anchors
    let (n, k, d) = (12, 5, 8);
    let entries = (0..n).map(|w| (vec![w % 3, 3, 4], vec![0.5, 0.25, 1.0])).collect();
    let cb = SparseCodebook::from_entries(k, entries).unwrap();
    let anchors = AnchorMatrix::new(Tensor::new(vec![k, d], vec![0.1; k * d]).unwrap()).unwrap();
    let cfg = ModelConfig { dim: d, heads: 2, classes: 2, max_positions: 128, ..Default::default() };
    let model = AdeModel::new(cfg, cb, anchors, 0).unwrap();
    let ckpt = dir.path().join("m.ade");
    checkpoint_save(&model, &ckpt).unwrap();
    let out = dir.path().join("bench.json");
    let (code, text) =
        ade(&["bench", "--checkpoint", s(&ckpt), "--batch", "32", "--len", "128", "--iters", "1", "--warmup", "0", "--out", s(&out)]);
    assert_eq!(code, 0, "{text}");
    let r: ade::evalbench::LatencyReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.expanded_len, 3 * 32 * 128);
    assert!(text.contains(&format!("expanded {}", 3 * 32 * 128)));
    assert_eq!(ade(&["bench", "--checkpoint", s(&ckpt), "--iters", "0"]).0, 2);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(ade(&["frobnicate"]).0, 2);
    assert_eq!(ade(&["--help"]).0, 0);
}
