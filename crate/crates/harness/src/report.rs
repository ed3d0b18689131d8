//! Plain-text summary tables.

use std::fmt::Write;

use crate::records::{AggregateRecord, CoverageRecord};

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    for row in rows {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

fn g(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

pub fn summary_table(rows: &[AggregateRecord]) -> String {
    let header = [
        "experiment", "d", "n", "r", "mu0", "m", "p", "m1", "m2", "trials", "success", "se", "unique", "eps",
        "eps/sqrt(r)", "eps*sqrt(p)",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|a| {
            vec![
                a.experiment.clone(),
                a.d.to_string(),
                a.n.to_string(),
                a.r.to_string(),
                g(a.mu0_target),
                a.m.to_string(),
                g(a.p),
                a.m1.to_string(),
                a.m2.to_string(),
                a.trials.to_string(),
                g(a.success_rate),
                g(a.success_se),
                format!("{:.0}", a.mean_unique_entries),
                g(a.mean_excess_eps),
                g(a.eps_over_sqrt_r),
                g(a.eps_times_sqrt_p),
            ]
        })
        .collect();
    table(&header, &body)
}

pub fn coverage_table(rows: &[CoverageRecord]) -> String {
    let header = ["d", "r", "mu0", "m", "delta", "trials", "evaluated", "coverage", "1-4delta", "note"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|c| {
            vec![
                c.d.to_string(),
                c.r.to_string(),
                g(c.mu0_target),
                c.m.to_string(),
                g(c.delta),
                c.trials.to_string(),
                c.evaluated.to_string(),
                g(c.coverage),
                g(c.guarantee),
                if c.skipped_reason.is_empty() { String::new() } else { "skipped".into() },
            ]
        })
        .collect();
    table(&header, &body)
}
