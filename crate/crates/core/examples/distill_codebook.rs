//! Distils a sparse anchor codebook from a clustered teacher embedding and
//! writes it to disk.
//!
//! cargo run --release --example distill_codebook

use ade::codebook::{compression_report, read_codebook, write_codebook, CompressionInput, StorageLayout};
use ade::distill::{distill_codebook, synthetic_teacher, DistillConfig, SyntheticTeacherSpec};

fn main() -> ade::Result<()> {
    let teacher = synthetic_teacher(&SyntheticTeacherSpec::default())?.teacher;
    let cfg = DistillConfig { num_anchors: 16, ..Default::default() };
    let tau = 0.1;
    let dc = distill_codebook(&teacher, &cfg, tau)?;

    let h = &dc.outcome.history;
    println!("loss {:.4} -> {:.4} over {} steps", h[0], h[h.len() - 1], h.len());
    println!("mean cosine: dense {:.4}, after thresholding {:.4}", dc.outcome.final_mean_cosine, dc.sparse_mean_cosine);
    let cards = dc.codebook.cardinalities();
    println!("mean anchors per word {:.2}", cards.iter().sum::<usize>() as f64 / cards.len() as f64);

    let dim = dc.outcome.anchors.values().shape()[1];
    let r = compression_report(&CompressionInput::from_codebook(&dc.codebook, dim, StorageLayout::default()));
    println!("storage {} bytes vs dense {} bytes ({:.2}x)", r.storage_bytes, r.baseline_bytes, r.ratio);

    let path = std::env::temp_dir().join("example.adecb");
    let bytes = write_codebook(&dc.codebook, &dc.outcome.anchors, tau)?;
    std::fs::write(&path, &bytes)?;
    let (cb, _anchors, _tau) = read_codebook(&std::fs::read(&path)?)?;
    // weights are stored as f32, so compare structure
    assert_eq!(cb.cardinalities(), dc.codebook.cardinalities());
    println!("wrote {} ({} bytes)", path.display(), bytes.len());
    Ok(())
}
