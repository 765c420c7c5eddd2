//! Times eval-mode forward passes of a freshly distilled model.
//!
//! cargo run --release --example latency_bench

use ade::evalbench::{format_latency, latency_bench, prepare_codebook, ExperimentConfig};
use ade::pipeline::AdeModel;

fn main() -> ade::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.distill.steps = 200;
    let cb = prepare_codebook(&cfg, 16)?;
    for use_sat in [true, false] {
        let mcfg = ade::pipeline::ModelConfig { classes: cfg.task.classes, use_sat, ..cfg.model.clone() };
        let model = AdeModel::new(mcfg, cb.codebook.clone(), cb.outcome.anchors.clone(), 0)?;
        let r = latency_bench(&model, 32, 32, 2, 10, 0)?;
        println!("attention {use_sat}: {}", format_latency(&r));
    }
    Ok(())
}
