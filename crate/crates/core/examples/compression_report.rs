//! Parameter and storage accounting at full scale: d = 768, four classes,
//! a 128,100-word vocabulary with 8.4 anchors per word on average.
//!
//! cargo run --example compression_report

use ade::codebook::{compression_report, CompressionInput, StorageLayout};
use ade::evalbench::{format_compression_table, format_param_table};
use ade::sat::{count_params, ParamConfig};

fn main() -> ade::Result<()> {
    let table = count_params(&ParamConfig {
        dim: 768,
        heads: 12,
        classes: 4,
        num_anchors: 100,
        codebook_entries: 1_076_040,
        trainable_embeddings: false,
    })?;
    println!("{}", format_param_table(&table));

    let reports: Vec<_> = [100, 200, 300, 500]
        .into_iter()
        .map(|k| compression_report(&CompressionInput::with_mean_cardinality(128_100, 768, k, 8.4, StorageLayout::default())))
        .collect();
    println!("{}", format_compression_table(&reports));

    // how small the average cardinality has to be for K = 500 to reach 40x
    let mut k_avg = 8.4;
    while compression_report(&CompressionInput::with_mean_cardinality(128_100, 768, 500, k_avg, StorageLayout::default())).ratio < 40.0 {
        k_avg -= 0.01;
    }
    println!("K = 500 reaches 40x at about {k_avg:.2} anchors per word");
    Ok(())
}
