//! Trains the classifier on the synthetic polysemy task with and without the
//! attention block and compares both against the exact Bayes rates.
//!
//! cargo run --release --example ablation [seeds]

use ade::evalbench::{format_sweep_table, run_ablation_sweep, threads_from_env, ExperimentConfig};

fn main() -> ade::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = ExperimentConfig::default();
    let seeds: Vec<u64> = (0..seeds).collect();
    let sweep = run_ablation_sweep(&cfg, &[16], &seeds, threads_from_env())?;
    println!("{}", format_sweep_table(&sweep));
    println!(
        "Bayes rates: context-aware {:.1}%, context-free {:.1}%",
        100.0 * sweep.bayes.context_aware,
        100.0 * sweep.bayes.context_free
    );
    println!(
        "with attention {:.1}%, without {:.1}%",
        100.0 * sweep.mean_accuracy(true),
        100.0 * sweep.mean_accuracy(false)
    );
    Ok(())
}
