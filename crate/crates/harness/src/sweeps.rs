//! Grid sweeps over instances and algorithms.
//!
//! Every `(grid point, trial)` pair is an independent task seeded with
//! `derive_seed(base, [grid_index, trial])`; the instance and each algorithm
//! draw from child streams of that seed. Tasks run on the rayon pool and the
//! rows are sorted before they are returned, so output does not depend on
//! scheduling.

use std::time::Instant;

use amc_core::approximation::{adaptive_approximate, passive_approximate};
use amc_core::completion::{adaptive_complete, passive_entry_complete};
use amc_core::instances::{make_low_rank, GeneratedInstance, InstanceSpec, LowerBoundFamily};
use amc_core::metrics::{error_report_with, error_report_within, ErrorReport, TruthSpectrum};
use amc_core::oracle::EntryOracle;
use amc_core::rng::{self, derive_seed};
use amc_core::subspace::validate_projection_bounds;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, SingleAlgorithm};
use crate::records::{sort_records, CoverageRecord, TrialRecord};
use crate::threshold::{self, RatePoint, ThresholdEstimate};

/// Experiment labels written to the `experiment` column.
pub const COMPLETE: &str = "complete";
pub const APPROX_ADAPTIVE: &str = "approx-adaptive";
pub const APPROX_PASSIVE: &str = "approx-passive";
pub const LOWERBOUND_ADAPTIVE: &str = "lowerbound-adaptive";
pub const LOWERBOUND_PASSIVE: &str = "lowerbound-passive";

/// Child stream indices under a trial seed.
const INSTANCE_STREAM: u64 = 0;
const ADAPTIVE_STREAM: u64 = 1;
const PASSIVE_STREAM: u64 = 2;

/// Instance coordinates shared by the completion and approximation sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstancePoint {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub mu0: f64,
}

impl InstancePoint {
    pub fn spec(&self, cfg: &ExperimentConfig) -> InstanceSpec {
        InstanceSpec::new(self.d, self.n, self.r, self.mu0)
            .with_row_mode(cfg.instance.row_mode.into())
            .with_column_norms(cfg.instance.column_norms.into())
            .with_noise(cfg.instance.noise_sigma)
    }
}

/// Instance coordinates in grid order: `n`, then `d`, `r`, `μ₀`.
pub fn instance_points(cfg: &ExperimentConfig) -> Vec<InstancePoint> {
    let mut out = Vec::new();
    for &n in &cfg.grid.n {
        for d in cfg.dims_for(n) {
            for &r in &cfg.grid.r {
                for &mu0 in &cfg.grid.mu0 {
                    let len = d as f64 / (r as f64 * mu0);
                    if (len - len.round()).abs() > 1e-9 {
                        log::warn!("d={d} r={r} mu0={mu0}: block length {len} is not an integer; the realized mu0 will differ");
                    }
                    out.push(InstancePoint { d, n, r, mu0 });
                }
            }
        }
    }
    out
}

/// Probe counts for a completion sweep at dimension `d`.
pub fn completion_ms(cfg: &ExperimentConfig, d: usize) -> Vec<usize> {
    if !cfg.grid.m.is_empty() {
        return cfg.grid.m.iter().copied().filter(|&m| m >= 1 && m <= d).collect();
    }
    let mut ms: Vec<usize> = cfg.grid.p.iter().map(|&p| ((p * d as f64).round() as usize).clamp(1, d)).collect();
    ms.dedup();
    ms
}

/// Pass-1 and pass-2 counts for a per-column budget of `budget` samples.
pub fn split_budget(cfg: &ExperimentConfig, budget: usize) -> Result<(usize, usize)> {
    let m1 = cfg
        .algorithm
        .m1
        .unwrap_or_else(|| ((cfg.algorithm.m1_fraction * budget as f64).round() as usize).max(1));
    if m1 >= budget {
        bail!("per-column budget {budget} leaves nothing for the second pass after m1 = {m1}");
    }
    Ok((m1, budget - m1))
}

fn run_tasks<T, F>(tasks: Vec<T>, f: F) -> Result<Vec<TrialRecord>>
where
    T: Send + Sync,
    F: Fn(&T) -> Result<Vec<TrialRecord>> + Sync + Send,
{
    let rows: Vec<Vec<TrialRecord>> = tasks.par_iter().map(f).collect::<Result<_>>()?;
    let mut rows: Vec<TrialRecord> = rows.into_iter().flatten().collect();
    sort_records(&mut rows);
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn base_record(
    experiment: &str,
    pt: &InstancePoint,
    inst: &GeneratedInstance,
    m: usize,
    p: f64,
    (m1, m2): (usize, usize),
    grid_index: usize,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    TrialRecord {
        experiment: experiment.into(),
        d: pt.d,
        n: pt.n,
        r: pt.r,
        mu0_target: pt.mu0,
        mu0_realized: inst.realized_mu0,
        column_mu: inst.realized_column_mu,
        m,
        p,
        m1,
        m2,
        trial,
        seed,
        raw_queries: 0,
        unique_entries: 0,
        frob_error: 0.0,
        spectral_error: 0.0,
        excess_eps: 0.0,
        exact_success: false,
        wall_ms: 0.0,
        grid_index,
    }
}

fn fill(rec: &mut TrialRecord, report: &ErrorReport, raw: u64, unique: u64, started: Instant) {
    rec.raw_queries = raw;
    rec.unique_entries = unique;
    rec.frob_error = report.frob_error;
    rec.spectral_error = report.spectral_error;
    rec.excess_eps = report.excess_risk_eps;
    rec.exact_success = report.exact_success;
    rec.wall_ms = (started.elapsed().as_secs_f64() * 1e6).round() / 1e3;
}

/// One adaptive completion trial.
pub fn completion_trial(
    cfg: &ExperimentConfig,
    pt: &InstancePoint,
    m: usize,
    grid_index: usize,
    trial: usize,
    seed: u64,
) -> Result<TrialRecord> {
    let started = Instant::now();
    let inst = make_low_rank(&pt.spec(cfg), &mut rng::derive(seed, &[INSTANCE_STREAM]))?;
    let oracle = EntryOracle::new(&inst.matrix);
    let res = adaptive_complete(&oracle, m, cfg.algorithm.tau_rel, &mut rng::derive(seed, &[ADAPTIVE_STREAM]))?;
    let spectrum = TruthSpectrum::within(&inst.matrix, &inst.column_space);
    let report = error_report_within(
        &inst.matrix,
        &spectrum,
        &res.estimate,
        pt.r,
        cfg.algorithm.success_tol,
        &inst.column_space,
    )?;
    let p = m as f64 / pt.d as f64;
    let mut rec = base_record(COMPLETE, pt, &inst, m, p, (0, 0), grid_index, trial, seed);
    fill(&mut rec, &report, res.raw_queries, res.unique_entries_observed, started);
    Ok(rec)
}

pub fn run_completion_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let mut tasks = Vec::new();
    for pt in instance_points(cfg) {
        for m in completion_ms(cfg, pt.d) {
            let grid_index = tasks.len() / cfg.trials;
            for trial in 0..cfg.trials {
                tasks.push((pt, m, grid_index, trial));
            }
        }
    }
    run_tasks(tasks, |&(pt, m, g, t)| {
        let seed = derive_seed(cfg.seed, &[g as u64, t as u64]);
        Ok(vec![completion_trial(cfg, &pt, m, g, t, seed)?])
    })
}

/// One approximation trial: the adaptive pipeline and, if configured, the
/// passive baseline at the same per-column budget on the same instance.
pub fn approx_trial(
    cfg: &ExperimentConfig,
    pt: &InstancePoint,
    p: f64,
    grid_index: usize,
    trial: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let budget = ((p * pt.d as f64).round() as usize).clamp(1, pt.d);
    let (m1, m2) = split_budget(cfg, budget)?;
    let started = Instant::now();
    let inst = make_low_rank(&pt.spec(cfg), &mut rng::derive(seed, &[INSTANCE_STREAM]))?;
    let spectrum = TruthSpectrum::new(&inst.matrix);
    let tol = cfg.algorithm.success_tol;
    let mut out = Vec::with_capacity(2);

    let oracle = EntryOracle::new(&inst.matrix);
    let res = adaptive_approximate(&oracle, m1, m2, pt.r, &mut rng::derive(seed, &[ADAPTIVE_STREAM]))?;
    let report = error_report_with(&inst.matrix, &spectrum, &res.x_hat, pt.r, tol)?;
    let mut rec = base_record(APPROX_ADAPTIVE, pt, &inst, budget, p, (m1, m2), grid_index, trial, seed);
    fill(&mut rec, &report, res.raw_queries, res.unique_entries_observed, started);
    out.push(rec);

    if cfg.algorithm.passive {
        let started = Instant::now();
        let oracle = EntryOracle::new(&inst.matrix);
        let res = passive_approximate(&oracle, budget, pt.r, &mut rng::derive(seed, &[PASSIVE_STREAM]))?;
        let report = error_report_with(&inst.matrix, &spectrum, &res.x_hat, pt.r, tol)?;
        let mut rec = base_record(APPROX_PASSIVE, pt, &inst, budget, p, (0, budget), grid_index, trial, seed);
        fill(&mut rec, &report, res.raw_queries, res.unique_entries_observed, started);
        out.push(rec);
    }
    Ok(out)
}

pub fn run_approx_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let mut tasks = Vec::new();
    for pt in instance_points(cfg) {
        for &p in &cfg.grid.p {
            let grid_index = tasks.len() / cfg.trials;
            for trial in 0..cfg.trials {
                tasks.push((pt, p, grid_index, trial));
            }
        }
    }
    run_tasks(tasks, |&(pt, p, g, t)| approx_trial(cfg, &pt, p, g, t, derive_seed(cfg.seed, &[g as u64, t as u64])))
}

/// Coverage of the residual bound at each `(d, r, μ₀, m, δ)` grid point.
/// Points whose `m` violates the precondition are kept with a reason.
pub fn run_bounds_validation(cfg: &ExperimentConfig) -> Result<Vec<CoverageRecord>> {
    let mut points = Vec::new();
    let dims = if cfg.instance.square { &cfg.grid.n } else { &cfg.grid.d };
    for &d in dims {
        for &r in &cfg.grid.r {
            for &mu0 in &cfg.grid.mu0 {
                for &m in &cfg.grid.m {
                    for &delta in &cfg.grid.delta {
                        points.push((d, r, mu0, m, delta));
                    }
                }
            }
        }
    }
    // Trials inside a point already run in parallel.
    let mut out = Vec::with_capacity(points.len());
    for (g, &(d, r, mu0, m, delta)) in points.iter().enumerate() {
        let mut rng = rng::derive(cfg.seed, &[g as u64]);
        let mut rec = CoverageRecord {
            experiment: "bounds".into(),
            d,
            r,
            mu0_target: mu0,
            m,
            delta,
            trials: cfg.trials,
            evaluated: 0,
            held: 0,
            coverage: f64::NAN,
            guarantee: 1.0 - 4.0 * delta,
            skipped_reason: String::new(),
            grid_index: g,
        };
        match validate_projection_bounds(d, r, mu0, m, delta, cfg.trials, &mut rng) {
            Ok(rep) => {
                rec.evaluated = rep.evaluated;
                rec.held = rep.held;
                rec.coverage = rep.coverage();
                if rep.evaluated < rep.trials {
                    log::info!("d={d} r={r} m={m}: {} trials skipped by the mu(v) precondition", rep.skipped());
                }
            }
            Err(amc_core::Error::InvalidArgument(reason)) => {
                log::warn!("skipping d={d} r={r} mu0={mu0} m={m} delta={delta}: {reason}");
                rec.skipped_reason = reason;
            }
            Err(e) => return Err(e.into()),
        }
        out.push(rec);
    }
    Ok(out)
}

/// A point of the lower-bound demo.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LowerboundArm {
    /// Adaptive completion with `m` probes per column.
    Adaptive(usize),
    /// Passive entry sampling revealing this fraction of all entries.
    Passive(f64),
}

pub fn run_lowerbound_demo(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let mut tasks = Vec::new();
    for &n in &cfg.grid.n {
        for d in cfg.dims_for(n) {
            for &r in &cfg.grid.r {
                for &l in &cfg.grid.l {
                    if l == 0 || r * l > d {
                        bail!("hidden block length l = {l} does not fit r = {r} blocks into d = {d}");
                    }
                    let mu0 = d as f64 / (r * l) as f64;
                    let family = LowerBoundFamily::new(d, n, r, mu0)?;
                    let arms = cfg
                        .grid
                        .m
                        .iter()
                        .map(|&m| LowerboundArm::Adaptive(m))
                        .chain(cfg.grid.passive_fraction.iter().map(|&f| LowerboundArm::Passive(f)));
                    for arm in arms {
                        let grid_index = tasks.len() / cfg.trials;
                        for trial in 0..cfg.trials {
                            tasks.push((family, InstancePoint { d, n, r, mu0 }, arm, grid_index, trial));
                        }
                    }
                }
            }
        }
    }
    run_tasks(tasks, |&(family, pt, arm, g, t)| {
        let seed = derive_seed(cfg.seed, &[g as u64, t as u64]);
        Ok(vec![lowerbound_trial(cfg, &family, &pt, arm, g, t, seed)?])
    })
}

fn lowerbound_trial(
    cfg: &ExperimentConfig,
    family: &LowerBoundFamily,
    pt: &InstancePoint,
    arm: LowerboundArm,
    grid_index: usize,
    trial: usize,
    seed: u64,
) -> Result<TrialRecord> {
    let started = Instant::now();
    let inst = family.sample(&mut rng::derive(seed, &[INSTANCE_STREAM]))?.instance;
    let spectrum = TruthSpectrum::new(&inst.matrix);
    let tol = cfg.algorithm.success_tol;
    let oracle = EntryOracle::new(&inst.matrix);
    let (d, n) = (pt.d, pt.n);
    let (label, m, p, estimate, raw, unique) = match arm {
        LowerboundArm::Adaptive(m) => {
            let m = m.clamp(1, d);
            let res = adaptive_complete(&oracle, m, cfg.algorithm.tau_rel, &mut rng::derive(seed, &[ADAPTIVE_STREAM]))?;
            (LOWERBOUND_ADAPTIVE, m, m as f64 / d as f64, res.estimate, res.raw_queries, res.unique_entries_observed)
        }
        LowerboundArm::Passive(f) => {
            let entries = (f * (d * n) as f64).round() as usize;
            let res = passive_entry_complete(&oracle, entries, pt.r, &mut rng::derive(seed, &[PASSIVE_STREAM]))?;
            let m = (f * d as f64).round() as usize;
            (LOWERBOUND_PASSIVE, m, f, res.estimate, res.raw_queries, res.unique_entries_observed)
        }
    };
    let report = error_report_with(&inst.matrix, &spectrum, &estimate, pt.r, tol)?;
    let mut rec = base_record(label, pt, &inst, m, p, (0, 0), grid_index, trial, seed);
    fill(&mut rec, &report, raw, unique, started);
    Ok(rec)
}

/// Repeats one configuration: the first value of every grid list.
pub fn run_single(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let pt = *instance_points(cfg).first().context("empty grid")?;
    let tasks: Vec<usize> = (0..cfg.trials).collect();
    match cfg.algorithm.single {
        SingleAlgorithm::Complete => {
            let m = *completion_ms(cfg, pt.d).first().context("no valid m for this d")?;
            run_tasks(tasks, |&t| {
                let seed = derive_seed(cfg.seed, &[0, t as u64]);
                Ok(vec![completion_trial(cfg, &pt, m, 0, t, seed)?])
            })
        }
        SingleAlgorithm::Approx | SingleAlgorithm::Passive => {
            let p = *cfg.grid.p.first().context("single approximation runs need grid.p")?;
            let keep = if cfg.algorithm.single == SingleAlgorithm::Approx { APPROX_ADAPTIVE } else { APPROX_PASSIVE };
            let mut cfg = cfg.clone();
            cfg.algorithm.passive = keep == APPROX_PASSIVE;
            run_tasks(tasks, |&t| {
                let seed = derive_seed(cfg.seed, &[0, t as u64]);
                let rows = approx_trial(&cfg, &pt, p, 0, t, seed)?;
                Ok(rows.into_iter().filter(|r| r.experiment == keep).collect())
            })
        }
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub enum Outcome {
    Trials(Vec<TrialRecord>),
    Coverage(Vec<CoverageRecord>),
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::CompleteSweep => Outcome::Trials(run_completion_sweep(cfg)?),
        ExperimentKind::ApproxSweep => Outcome::Trials(run_approx_sweep(cfg)?),
        ExperimentKind::BoundsValidate => Outcome::Coverage(run_bounds_validation(cfg)?),
        ExperimentKind::LowerboundDemo => Outcome::Trials(run_lowerbound_demo(cfg)?),
        ExperimentKind::SingleRun => Outcome::Trials(run_single(cfg)?),
    })
}

/// A located completion threshold for one instance point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ThresholdRecord {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub mu0_target: f64,
    pub mu0_realized: f64,
    pub target: f64,
    pub m_star: Option<f64>,
    pub crossing: String,
    pub points_evaluated: usize,
    pub trials: usize,
}

/// Locates `m*` at success rate `target` for every instance point of a
/// completion config, searching from the config's `m` grid.
///
/// Trial seeds are `derive_seed(base, [point_index, m, trial])`, so a value
/// of `m` gets the same trials whichever round evaluates it.
pub fn locate_completion_thresholds(
    cfg: &ExperimentConfig,
    target: f64,
    rounds: usize,
    per_round: usize,
) -> Result<(Vec<ThresholdRecord>, Vec<TrialRecord>)> {
    cfg.validate()?;
    let mut thresholds = Vec::new();
    let mut all_rows = Vec::new();
    for (g, pt) in instance_points(cfg).into_iter().enumerate() {
        let coarse = completion_ms(cfg, pt.d);
        let mut rows_here = Vec::new();
        let est: ThresholdEstimate = threshold::locate(target, &coarse, rounds, per_round, |ms| {
            let tasks: Vec<(usize, usize)> =
                ms.iter().flat_map(|&m| (0..cfg.trials).map(move |t| (m, t))).collect();
            let rows = run_tasks(tasks, |&(m, t)| {
                let seed = derive_seed(cfg.seed, &[g as u64, m as u64, t as u64]);
                // Sort by m inside the point.
                Ok(vec![completion_trial(cfg, &pt, m, g * 1_000_000 + m, t, seed)?])
            })?;
            let pts = ms
                .iter()
                .map(|&m| {
                    let at: Vec<_> = rows.iter().filter(|r| r.m == m).collect();
                    RatePoint { m, successes: at.iter().filter(|r| r.exact_success).count(), trials: at.len() }
                })
                .collect();
            rows_here.extend(rows);
            Ok::<_, anyhow::Error>(pts)
        })?;
        let mu0_realized = rows_here.first().map(|r| r.mu0_realized).unwrap_or(f64::NAN);
        log::info!("d={} n={} r={} mu0={}: m* = {:?} ({:?})", pt.d, pt.n, pt.r, pt.mu0, est.m_star, est.crossing);
        thresholds.push(ThresholdRecord {
            d: pt.d,
            n: pt.n,
            r: pt.r,
            mu0_target: pt.mu0,
            mu0_realized,
            target,
            m_star: est.m_star,
            crossing: format!("{:?}", est.crossing).to_lowercase(),
            points_evaluated: est.points.len(),
            trials: cfg.trials,
        });
        all_rows.extend(rows_here);
    }
    sort_records(&mut all_rows);
    Ok((thresholds, all_rows))
}
