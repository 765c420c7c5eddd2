//! Grouped positional encoding: every anchor of a word shares that word's
//! position vector.
//!
//! cargo run --example grouped_positions

use ade::gpe::{grouped_pe, pos_indices, sinusoidal_pe};

fn main() -> ade::Result<()> {
    let sub_lengths = [3, 1, 4];
    let idx = pos_indices(&sub_lengths)?;
    println!("anchors per word {sub_lengths:?} -> positions {idx:?}");

    let table = sinusoidal_pe(16, 8)?;
    let pe = grouped_pe(&table, &sub_lengths)?;
    for (t, &p) in idx.iter().enumerate() {
        let row: Vec<String> = pe.row(t)[..4].iter().map(|v| format!("{v:+.3}")).collect();
        println!("anchor {t} (word {p}): [{} ...]", row.join(", "));
    }
    Ok(())
}
