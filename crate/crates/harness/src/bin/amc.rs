use std::path::{Path, PathBuf};

use amc_core::instances::{make_low_rank, make_lower_bound_instance, InstanceSpec};
use amc_core::rng;
use amc_harness::config::{ColumnNormName, ExperimentConfig, ExperimentKind, RowModeName};
use amc_harness::plots::{emit_plot_scripts, PlotKind};
use amc_harness::records::{aggregate, read_trials, summary_path, write_csv};
use amc_harness::sweeps::{self, Outcome};
use amc_harness::{configure_threads, matrix_io, report, resolve_output, write_outcome};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Adaptive sampling experiments for low-rank matrix completion and
/// approximation.
#[derive(Parser)]
#[command(name = "amc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Completion sweep over (n, r, mu0, m).
    Complete {
        #[command(flatten)]
        common: Common,
        /// Locate m* at this success rate instead of sweeping the grid.
        #[arg(long)]
        locate: Option<f64>,
        /// Refinement rounds for --locate.
        #[arg(long, default_value_t = 4)]
        rounds: usize,
        /// New points per refinement round for --locate.
        #[arg(long, default_value_t = 3)]
        per_round: usize,
    },
    /// Approximation sweep over (n, r, mu0, p), adaptive and passive.
    Approx {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo coverage of the residual bound.
    ValidateBounds {
        #[command(flatten)]
        common: Common,
    },
    /// Adaptive completion against passive sampling on the hard family.
    Lowerbound {
        #[command(flatten)]
        common: Common,
    },
    /// Runs whatever experiment the config names, including single-run.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Writes one generated instance to a matrix file (.bin for binary).
    Gen(GenArgs),
    /// Summarizes a raw trial CSV.
    Report {
        csv: PathBuf,
        /// Where to write the summary CSV (default: next to the input).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Writes plotting scripts for a summary CSV.
    Plots {
        csv: PathBuf,
        #[arg(long)]
        kind: PlotKind,
        #[arg(long, default_value = "plots")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file. Flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set grid.m=[20,40] (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Raw CSV path, resolved against AMC_OUTPUT_DIR when relative.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write plotting scripts into this directory.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    LowRank,
    LowerBound,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 1.0)]
    mu0: f64,
    #[arg(long, value_enum, default_value_t = Family::LowRank)]
    family: Family,
    #[arg(long, default_value = "gaussian")]
    row_mode: String,
    #[arg(long, default_value = "constant")]
    column_norms: String,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

fn load_config(common: &Common, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind.unwrap_or(ExperimentKind::SingleRun)),
    };
    if let Some(kind) = kind {
        cfg.experiment = kind;
    }
    cfg.apply_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(output) = &common.output {
        cfg.output = output.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plot_kind(kind: ExperimentKind) -> PlotKind {
    match kind {
        ExperimentKind::CompleteSweep | ExperimentKind::SingleRun => PlotKind::Completion,
        ExperimentKind::ApproxSweep => PlotKind::Approx,
        ExperimentKind::BoundsValidate => PlotKind::Bounds,
        ExperimentKind::LowerboundDemo => PlotKind::Lowerbound,
    }
}

fn execute(common: &Common, kind: Option<ExperimentKind>) -> Result<()> {
    let cfg = load_config(common, kind)?;
    if common.dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let raw = resolve_output(&cfg.output);
    let outcome = sweeps::run(&cfg)?;
    let written = write_outcome(&raw, &outcome)?;
    match &outcome {
        Outcome::Trials(rows) => print!("{}", report::summary_table(&aggregate(rows))),
        Outcome::Coverage(rows) => print!("{}", report::coverage_table(rows)),
    }
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    if let Some(dir) = &common.plots {
        let csv = written.last().expect("at least one file written");
        for path in emit_plot_scripts(csv, plot_kind(cfg.experiment), &resolve_output(dir))? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn locate(common: &Common, target: f64, rounds: usize, per_round: usize) -> Result<()> {
    let cfg = load_config(common, Some(ExperimentKind::CompleteSweep))?;
    if !(target > 0.0 && target <= 1.0) {
        anyhow::bail!("--locate target must lie in (0, 1]");
    }
    let (thresholds, rows) = sweeps::locate_completion_thresholds(&cfg, target, rounds, per_round)?;
    let raw = resolve_output(&cfg.output);
    for path in write_outcome(&raw, &Outcome::Trials(rows))? {
        eprintln!("wrote {}", path.display());
    }
    let out = raw.with_file_name(format!(
        "{}.thresholds.csv",
        raw.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    write_csv(&out, &thresholds)?;
    eprintln!("wrote {}", out.display());
    for t in &thresholds {
        let m = t.m_star.map_or("not reached".into(), |m| format!("{m:.2}"));
        println!("d={} n={} r={} mu0={} m*({})={} [{}]", t.d, t.n, t.r, t.mu0_target, t.target, m, t.crossing);
    }
    Ok(())
}

fn parse_enum<T: serde::de::DeserializeOwned>(name: &str, value: &str) -> Result<T> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(value))
        .with_context(|| format!("unknown {name} `{value}`"))
}

fn generate(args: &GenArgs) -> Result<()> {
    let mut rng = rng::seeded(args.seed);
    let inst = match args.family {
        Family::LowRank => {
            let row: RowModeName = parse_enum("row mode", &args.row_mode)?;
            let norms: ColumnNormName = parse_enum("column norm mode", &args.column_norms)?;
            let spec = InstanceSpec::new(args.d, args.n, args.r, args.mu0)
                .with_row_mode(row.into())
                .with_column_norms(norms.into())
                .with_noise(args.noise);
            make_low_rank(&spec, &mut rng)?
        }
        Family::LowerBound => make_lower_bound_instance(args.d, args.n, args.r, args.mu0, &mut rng)?.instance,
    };
    let path = resolve_output(&args.output);
    matrix_io::save(&path, &inst.matrix)?;
    eprintln!(
        "wrote {} ({}x{}, realized mu0 = {}, column mu = {})",
        path.display(),
        args.d,
        args.n,
        inst.realized_mu0,
        inst.realized_column_mu
    );
    Ok(())
}

fn summarize(csv: &Path, summary: Option<&Path>) -> Result<()> {
    let rows = read_trials(csv)?;
    let agg = aggregate(&rows);
    print!("{}", report::summary_table(&agg));
    let out = summary.map(Path::to_path_buf).unwrap_or_else(|| summary_path(csv));
    write_csv(&out, &agg)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads()?;
    let cli = Cli::parse();
    match &cli.command {
        Command::Complete { common, locate: Some(target), rounds, per_round } => {
            locate(common, *target, *rounds, *per_round)
        }
        Command::Complete { common, locate: None, .. } => execute(common, Some(ExperimentKind::CompleteSweep)),
        Command::Approx { common } => execute(common, Some(ExperimentKind::ApproxSweep)),
        Command::ValidateBounds { common } => execute(common, Some(ExperimentKind::BoundsValidate)),
        Command::Lowerbound { common } => execute(common, Some(ExperimentKind::LowerboundDemo)),
        Command::Run { common } => execute(common, None),
        Command::Gen(args) => generate(args),
        Command::Report { csv, summary } => summarize(csv, summary.as_deref()),
        Command::Plots { csv, kind, dir } => {
            for path in emit_plot_scripts(csv, *kind, &resolve_output(dir))? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
