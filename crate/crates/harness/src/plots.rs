//! Standalone matplotlib scripts that plot the summary CSVs. The binary
//! never plots anything itself.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Completion,
    Approx,
    Bounds,
    Lowerbound,
}

impl std::str::FromStr for PlotKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "completion" | "complete" | "complete-sweep" => Self::Completion,
            "approx" | "approx-sweep" => Self::Approx,
            "bounds" | "bounds-validate" => Self::Bounds,
            "lowerbound" | "lowerbound-demo" => Self::Lowerbound,
            other => bail!("unknown plot kind `{other}`"),
        })
    }
}

/// One figure: `y` against `x`, one line per distinct value of `group`.
#[derive(Debug, Clone, Copy)]
pub struct FigureSpec {
    pub name: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    pub group: &'static [&'static str],
    pub experiment: Option<&'static str>,
    pub xlabel: &'static str,
    pub ylabel: &'static str,
    pub logy: bool,
}

const COMPLETION: &[FigureSpec] = &[
    FigureSpec {
        name: "success_vs_p",
        x: "p",
        y: "success_rate",
        group: &["n", "r", "mu0_target"],
        experiment: Some("complete"),
        xlabel: "fraction of samples per column p = m/d",
        ylabel: "probability of exact recovery",
        logy: false,
    },
    FigureSpec {
        name: "success_vs_m",
        x: "m",
        y: "success_rate",
        group: &["n", "r", "mu0_target"],
        experiment: Some("complete"),
        xlabel: "samples per column m",
        ylabel: "probability of exact recovery",
        logy: false,
    },
    FigureSpec {
        name: "success_vs_p_over_rlogr",
        x: "p_over_r_log_r",
        y: "success_rate",
        group: &["n", "r", "mu0_target"],
        experiment: Some("complete"),
        xlabel: "rescaled sample probability p/(r log r)",
        ylabel: "probability of exact recovery",
        logy: false,
    },
    FigureSpec {
        name: "success_vs_p_over_mu0",
        x: "p_over_mu0",
        y: "success_rate",
        group: &["n", "r", "mu0_target"],
        experiment: Some("complete"),
        xlabel: "rescaled sampling probability p/mu0",
        ylabel: "probability of exact recovery",
        logy: false,
    },
];

const APPROX: &[FigureSpec] = &[
    FigureSpec {
        name: "eps_vs_p",
        x: "p",
        y: "mean_excess_eps",
        group: &["n", "r"],
        experiment: Some("approx-adaptive"),
        xlabel: "average fraction of samples per column p",
        ylabel: "relative excess error eps",
        logy: true,
    },
    FigureSpec {
        name: "eps_over_sqrt_r_vs_p",
        x: "p",
        y: "eps_over_sqrt_r",
        group: &["n", "r"],
        experiment: Some("approx-adaptive"),
        xlabel: "average fraction of samples per column p",
        ylabel: "eps / sqrt(r)",
        logy: true,
    },
    FigureSpec {
        name: "eps_sqrt_p_vs_p",
        x: "p",
        y: "eps_times_sqrt_p",
        group: &["n", "r"],
        experiment: Some("approx-adaptive"),
        xlabel: "average fraction of samples per column p",
        ylabel: "sqrt(p) eps",
        logy: false,
    },
    FigureSpec {
        name: "adaptive_vs_passive",
        x: "p",
        y: "mean_excess_eps",
        group: &["experiment", "n", "r"],
        experiment: None,
        xlabel: "average fraction of samples per column p",
        ylabel: "relative excess error eps",
        logy: true,
    },
];

const BOUNDS: &[FigureSpec] = &[FigureSpec {
    name: "coverage_vs_m",
    x: "m",
    y: "coverage",
    group: &["d", "r", "delta"],
    experiment: None,
    xlabel: "samples m",
    ylabel: "empirical coverage of the residual bound",
    logy: false,
}];

const LOWERBOUND: &[FigureSpec] = &[FigureSpec {
    name: "success_vs_unique_entries",
    x: "mean_unique_entries",
    y: "success_rate",
    group: &["experiment", "d", "n", "r"],
    experiment: None,
    xlabel: "unique entries observed",
    ylabel: "probability of exact recovery",
    logy: false,
}];

pub fn figures(kind: PlotKind) -> &'static [FigureSpec] {
    match kind {
        PlotKind::Completion => COMPLETION,
        PlotKind::Approx => APPROX,
        PlotKind::Bounds => BOUNDS,
        PlotKind::Lowerbound => LOWERBOUND,
    }
}

fn py_list(items: &[&str]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("{s:?}")).collect();
    format!("[{}]", quoted.join(", "))
}

/// The source of one plotting script reading `csv`.
pub fn script(fig: &FigureSpec, csv: &Path) -> String {
    let experiment = fig.experiment.map_or("None".to_string(), |e| format!("{e:?}"));
    format!(
        r#"#!/usr/bin/env python3
"""Plot {y} against {x} from a summary CSV."""
import csv
import math
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV = sys.argv[1] if len(sys.argv) > 1 else {csv:?}
OUT = sys.argv[2] if len(sys.argv) > 2 else {png:?}
X, Y = {x:?}, {y:?}
GROUP = {group}
EXPERIMENT = {experiment}


def number(text):
    try:
        return float(text)
    except ValueError:
        return math.nan


lines = defaultdict(list)
with open(CSV, newline="") as fh:
    for row in csv.DictReader(fh):
        if EXPERIMENT is not None and row.get("experiment") != EXPERIMENT:
            continue
        key = ", ".join(f"{{g}}={{row[g]}}" for g in GROUP if g in row)
        x, y = number(row[X]), number(row[Y])
        if not (math.isnan(x) or math.isnan(y)):
            lines[key].append((x, y))

fig, ax = plt.subplots(figsize=(5, 4))
for key in sorted(lines):
    pts = sorted(lines[key])
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=key)
ax.set_xlabel({xlabel:?})
ax.set_ylabel({ylabel:?})
if {logy} and lines:
    ax.set_yscale("log")
if lines:
    ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(OUT, dpi=150)
"#,
        x = fig.x,
        y = fig.y,
        group = py_list(fig.group),
        csv = csv.display().to_string(),
        png = format!("{}.png", fig.name),
        xlabel = fig.xlabel,
        ylabel = fig.ylabel,
        logy = if fig.logy { "True" } else { "False" },
    )
}

/// Writes one script per figure of `kind` into `dir`, each reading `csv`.
pub fn emit_plot_scripts(csv: &Path, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    figures(kind)
        .iter()
        .map(|fig| {
            let path = dir.join(format!("plot_{}.py", fig.name));
            std::fs::write(&path, script(fig, csv))?;
            Ok(path)
        })
        .collect()
}
