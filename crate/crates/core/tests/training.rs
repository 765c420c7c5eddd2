//! Training, distillation and sweep behaviour on small problems.

mod common;

use ade::codebook::build_vp;
use ade::data::SynthTaskSpec;
use ade::distill::{distill_codebook, learn_anchors, synthetic_teacher, DistillConfig, SyntheticTeacherSpec};
use ade::evalbench::{prepare_codebook, prepare_task, run_ablation_sweep, ExperimentConfig};
use ade::pipeline::{train_classifier, AdeModel, ModelConfig, TrainConfig};

fn small_experiment() -> ExperimentConfig {
    ExperimentConfig {
        task: SynthTaskSpec { train_size: 64, test_size: 32, ..Default::default() },
        train: TrainConfig { total_steps: 20, warmup_steps: 5, batch_size: 8, ..Default::default() },
        distill: DistillConfig { steps: 20, ..Default::default() },
        ..Default::default()
    }
}

fn small_model(cfg: &ExperimentConfig, trainable: bool) -> (AdeModel, ade::data::EncodedDataset) {
    let prepared = prepare_task(cfg).unwrap();
    let dc = prepare_codebook(cfg, 8).unwrap();
    let mcfg = ModelConfig { trainable_embeddings: trainable, ..cfg.model.clone() };
    let m = AdeModel::new(mcfg, dc.codebook, dc.outcome.anchors, 0).unwrap();
    (m, prepared.train)
}

#[test]
fn frozen_embeddings_stay_bit_identical() {
    let cfg = small_experiment();
    let (m, data) = small_model(&cfg, false);
    let tcfg = TrainConfig { trainable_embeddings: false, ..cfg.train.clone() };
    let (trained, _) = train_classifier(&m, &data, &tcfg).unwrap();
    assert_eq!(trained.anchors, m.anchors);
    assert_eq!(trained.codebook, m.codebook);
    assert_ne!(trained.sat, m.sat);

    let tcfg = TrainConfig { trainable_embeddings: true, ..cfg.train.clone() };
    let (moved, _) = train_classifier(&m, &data, &tcfg).unwrap();
    assert_ne!(moved.anchors, m.anchors);
}

#[test]
fn training_replays_bit_identically() {
    let cfg = small_experiment();
    let (m, data) = small_model(&cfg, true);
    let (a, ha) = train_classifier(&m, &data, &cfg.train).unwrap();
    let (b, hb) = train_classifier(&m, &data, &cfg.train).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let other = TrainConfig { seed: 1, ..cfg.train.clone() };
    let (c, _) = train_classifier(&m, &data, &other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn sweep_replays_identically() {
    let cfg = small_experiment();
    let a = run_ablation_sweep(&cfg, &[4, 8], &[0, 1], 1).unwrap();
    let b = run_ablation_sweep(&cfg, &[4, 8], &[0, 1], 1).unwrap();
    assert_eq!(a.rows.len(), 4);
    assert_eq!(a.cells.len(), 8);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.metrics, y.metrics);
    }
    assert_eq!(a.rows, b.rows);
}

fn toy_teacher() -> ade::distill::TeacherEmbedding {
    synthetic_teacher(&SyntheticTeacherSpec { num_words: 300, dim: 16, clusters: 8, seed: 2, ..Default::default() })
        .unwrap()
        .teacher
}

#[test]
fn sparsity_penalty_thins_the_transform() {
    let teacher = toy_teacher();
    let base = DistillConfig { num_anchors: 8, steps: 300, learning_rate: 3e-3, seed: 5, ..Default::default() };
    let tau = 0.2;
    let count = |lambda: f64| {
        let out = learn_anchors(&teacher, &DistillConfig { sparsity: lambda, ..base.clone() }).unwrap();
        out.transform.data().iter().filter(|&&v| v >= tau).count()
    };
    let dense = count(0.0);
    for lambda in [1e-3, 0.05] {
        assert!(count(lambda) < dense, "λ={lambda}: {} vs {dense}", count(lambda));
    }
}

#[test]
fn thresholding_loses_little_fidelity() {
    let teacher = synthetic_teacher(&SyntheticTeacherSpec::default()).unwrap().teacher;
    let cfg = DistillConfig::default();
    assert!(cfg.sparsity > 0.0);
    let dc = distill_codebook(&teacher, &cfg, 0.1).unwrap();
    assert!(
        dc.outcome.final_mean_cosine - dc.sparse_mean_cosine <= 0.02,
        "dense {} sparse {}",
        dc.outcome.final_mean_cosine,
        dc.sparse_mean_cosine
    );
    let cb = build_vp(&dc.outcome.transform, 0.1).unwrap();
    assert!(cb.cardinalities().iter().all(|&k| (1..=16).contains(&k)));
    let h = &dc.outcome.history;
    assert!(h.last().unwrap() < h.first().unwrap());
}
