//! Report rendering: aligned text tables plus the machine-readable JSON form.

use std::fmt::Write as _;

use crate::eval::{MetricsReport, ALL_ATTRIBUTES};

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

fn render_table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (idx, row) in rows.iter().enumerate() {
        out.push('|');
        for (i, cell) in row.iter().enumerate() {
            // First column left-aligned, the rest right-aligned.
            if i == 0 {
                let _ = write!(out, " {cell:<width$} |", width = widths[i]);
            } else {
                let _ = write!(out, " {cell:>width$} |", width = widths[i]);
            }
        }
        out.push('\n');
        if idx == 0 {
            out.push('|');
            for w in &widths {
                let _ = write!(out, "{}|", "-".repeat(w + 2));
            }
            out.push('\n');
        }
    }
    out
}

/// Renders the human-readable aligned report: recall table, F1 table,
/// overall-score table, and the per-class recall breakdown.
pub fn render_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Evaluation report: {} ({} images, {} parse failures)",
        report.dataset, report.images, report.parse_failures
    );
    let _ = writeln!(
        out,
        "pooling: {}, threshold: {}, instructions: {}",
        match report.pooling {
            crate::eval::Pooling::Micro => "micro",
            crate::eval::Pooling::Macro => "macro",
        },
        report.threshold,
        report.eval_instruction_version
    );
    out.push('\n');

    let header: Vec<String> = std::iter::once("dataset".to_string())
        .chain(ALL_ATTRIBUTES.iter().map(|a| a.name().to_string()))
        .collect();

    let _ = writeln!(out, "Recall");
    let recall_row: Vec<String> = std::iter::once(report.dataset.clone())
        .chain(
            ALL_ATTRIBUTES
                .iter()
                .map(|a| fmt_opt(report.means[a].map(|m| m.recall))),
        )
        .collect();
    out.push_str(&render_table(&[header.clone(), recall_row]));
    out.push('\n');

    let _ = writeln!(out, "F1-score");
    let f1_row: Vec<String> = std::iter::once(report.dataset.clone())
        .chain(
            ALL_ATTRIBUTES
                .iter()
                .map(|a| fmt_opt(report.means[a].map(|m| m.f1))),
        )
        .collect();
    out.push_str(&render_table(&[header.clone(), f1_row]));
    out.push('\n');

    let _ = writeln!(out, "Precision");
    let precision_row: Vec<String> = std::iter::once(report.dataset.clone())
        .chain(
            ALL_ATTRIBUTES
                .iter()
                .map(|a| fmt_opt(report.means[a].map(|m| m.precision))),
        )
        .collect();
    out.push_str(&render_table(&[header, precision_row]));
    out.push('\n');

    let _ = writeln!(out, "Overall score");
    out.push_str(&render_table(&[
        vec!["dataset".to_string(), "overall".to_string()],
        vec![report.dataset.clone(), fmt_opt(report.overall_score)],
    ]));
    out.push('\n');

    let _ = writeln!(out, "Per-class recall (pass at >= {})", report.threshold);
    let mut rows = vec![vec![
        "attribute".to_string(),
        "class".to_string(),
        "recall".to_string(),
        "pass".to_string(),
    ]];
    for attribute in ALL_ATTRIBUTES {
        for (class, recall) in &report.per_class_recall[&attribute] {
            rows.push(vec![
                attribute.name().to_string(),
                class.clone(),
                format!("{recall:.4}"),
                if *recall >= report.threshold { "yes" } else { "no" }.to_string(),
            ]);
        }
    }
    out.push_str(&render_table(&rows));
    out
}

/// Machine-readable report document.
pub fn to_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}
