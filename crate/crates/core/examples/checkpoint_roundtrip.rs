//! Trains a small model, saves it, reloads it and checks that the reloaded
//! model makes the same predictions.
//!
//! cargo run --release --example checkpoint_roundtrip

use ade::evalbench::{format_metrics, prepare_codebook, prepare_task, train_and_evaluate, ExperimentConfig};
use ade::pipeline::{checkpoint_load, checkpoint_save, predict};

fn main() -> ade::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.distill.steps = 300;
    let prepared = prepare_task(&cfg)?;
    let codebook = prepare_codebook(&cfg, 16)?;
    let run = train_and_evaluate(&cfg, &prepared, &codebook, true, 0)?;
    println!("{}", format_metrics(&run.metrics));

    let path = std::env::temp_dir().join("example.ade");
    let bytes = checkpoint_save(&run.model, &path)?;
    let loaded = checkpoint_load(&path)?;
    let before = predict(&run.model, &prepared.test, 256)?;
    let after = predict(&loaded, &prepared.test, 256)?;
    let same = before.iter().zip(&after).filter(|(a, b)| a == b).count();
    println!("saved {} bytes; {same}/{} predictions unchanged after reload", bytes.len(), before.len());
    Ok(())
}
