use std::fmt::Write;

use crate::codebook::CompressionReport;
use crate::evalbench::{LatencyReport, MetricsReport, SweepResult};
use crate::sat::ParamTable;

/// Thousands separators: `2367749` → `2,367,749`.
fn grouped(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn format_sweep_table(r: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>6}  {:<8}  {:>9}  {:>7}  {:>9}  {:>7}  {:>5}", "K", "SAT", "Accuracy", "F1", "Precision", "Recall", "Runs");
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{:>6}  {:<8}  {:>9}  {:>7}  {:>9}  {:>7}  {:>2}/{:<2}",
            row.num_anchors,
            if row.use_sat { "with" } else { "without" },
            pct(row.accuracy),
            pct(row.f1),
            pct(row.precision),
            pct(row.recall),
            row.completed,
            row.completed + row.failed,
        );
    }
    let _ = writeln!(
        out,
        "Bayes accuracy: context-aware {}, context-free {}",
        pct(r.bayes.context_aware),
        pct(r.bayes.context_free)
    );
    out
}

pub fn format_param_table(t: &ParamTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28}  {:>12}  {}", "Component", "Parameters", "Status");
    for row in &t.rows {
        let _ = writeln!(
            out,
            "{:<28}  {:>12}  {}",
            row.component,
            grouped(row.params),
            if row.trainable { "trainable" } else { "frozen" }
        );
    }
    let _ = writeln!(out, "{:<28}  {:>12}", "Total trainable", grouped(t.total_trainable));
    let _ = writeln!(out, "{:<28}  {:>12}", "Total frozen", grouped(t.total_frozen));
    out
}

pub fn format_compression_table(reports: &[CompressionReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6}  {:>12}  {:>12}  {:>12}  {:>8}  {:>10}",
        "K", "A params", "Storage MB", "Baseline MB", "Ratio", "Reduction"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:>6}  {:>12}  {:>12.2}  {:>12.1}  {:>7.2}x  {:>9.2}%",
            r.num_anchors,
            grouped(r.a_params as usize),
            r.storage_mb,
            r.baseline_mb,
            r.ratio,
            r.reduction_pct
        );
    }
    out
}

pub fn format_latency(r: &LatencyReport) -> String {
    format!(
        "batch {}  length {}  expanded {}  {:.3} ms/batch  {:.1} samples/s (median of {})\n",
        r.batch, r.seq_len, r.expanded_len, r.ms_per_batch, r.samples_per_sec, r.iters
    )
}

pub fn format_metrics(m: &MetricsReport) -> String {
    let mut out = format!(
        "accuracy {}  macro-F1 {}  precision {}  recall {}\n",
        pct(m.accuracy),
        pct(m.macro_f1),
        pct(m.macro_precision),
        pct(m.macro_recall)
    );
    out.push_str("confusion (rows: true, columns: predicted)\n");
    for row in &m.confusion {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
        out.push_str(&cells.join(""));
        out.push('\n');
    }
    out
}
