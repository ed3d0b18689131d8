//! CSV rows and their aggregation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Column order of the raw per-trial CSV. Frozen.
pub const TRIAL_HEADER: [&str; 20] = [
    "experiment",
    "d",
    "n",
    "r",
    "mu0_target",
    "mu0_realized",
    "column_mu",
    "m",
    "p",
    "m1",
    "m2",
    "trial",
    "seed",
    "raw_queries",
    "unique_entries",
    "frob_error",
    "spectral_error",
    "excess_eps",
    "exact_success",
    "wall_ms",
];

/// One trial at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub mu0_target: f64,
    pub mu0_realized: f64,
    pub column_mu: f64,
    pub m: usize,
    pub p: f64,
    pub m1: usize,
    pub m2: usize,
    pub trial: usize,
    pub seed: u64,
    pub raw_queries: u64,
    pub unique_entries: u64,
    pub frob_error: f64,
    pub spectral_error: f64,
    pub excess_eps: f64,
    pub exact_success: bool,
    pub wall_ms: f64,
    /// Position in the enumerated grid; orders rows but is not written.
    #[serde(skip)]
    pub grid_index: usize,
}

impl TrialRecord {
    fn sort_key(&self) -> (usize, &str, usize) {
        (self.grid_index, self.experiment.as_str(), self.trial)
    }
}

/// Sorts rows by grid point, then experiment label, then trial.
pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Summary of all trials sharing a grid point and experiment label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub experiment: String,
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub mu0_target: f64,
    pub mu0_realized: f64,
    pub m: usize,
    pub p: f64,
    pub m1: usize,
    pub m2: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Binomial standard error `√(q(1−q)/trials)`.
    pub success_se: f64,
    pub mean_raw_queries: f64,
    pub mean_unique_entries: f64,
    pub max_unique_entries: u64,
    pub mean_frob_error: f64,
    pub mean_spectral_error: f64,
    pub mean_excess_eps: f64,
    pub excess_eps_se: f64,
    pub eps_over_sqrt_r: f64,
    pub eps_times_sqrt_p: f64,
    pub p_over_r_log_r: f64,
    pub p_over_mu0: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let k = v.len();
    let m = v.iter().sum::<f64>() / k as f64;
    let se = if k > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt()
    } else {
        0.0
    };
    (m, se, k)
}

/// Groups rows by `(grid point, experiment)` and summarizes each group.
/// The output follows the order of first appearance in sorted rows.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRecord> {
    let mut groups: BTreeMap<(usize, String), Vec<&TrialRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry((rec.grid_index, rec.experiment.clone())).or_default().push(rec);
    }
    groups.into_values().map(|rows| summarize(&rows)).collect()
}

fn summarize(rows: &[&TrialRecord]) -> AggregateRecord {
    let first = rows[0];
    let trials = rows.len();
    let successes = rows.iter().filter(|r| r.exact_success).count();
    let q = successes as f64 / trials as f64;
    let (eps, eps_se, _) = mean(rows.iter().map(|r| r.excess_eps));
    let r = first.r as f64;
    let r_log_r = r * r.ln();
    AggregateRecord {
        experiment: first.experiment.clone(),
        d: first.d,
        n: first.n,
        r: first.r,
        mu0_target: first.mu0_target,
        mu0_realized: mean(rows.iter().map(|r| r.mu0_realized)).0,
        m: first.m,
        p: first.p,
        m1: first.m1,
        m2: first.m2,
        trials,
        successes,
        success_rate: q,
        success_se: (q * (1.0 - q) / trials as f64).sqrt(),
        mean_raw_queries: mean(rows.iter().map(|r| r.raw_queries as f64)).0,
        mean_unique_entries: mean(rows.iter().map(|r| r.unique_entries as f64)).0,
        max_unique_entries: rows.iter().map(|r| r.unique_entries).max().unwrap_or(0),
        mean_frob_error: mean(rows.iter().map(|r| r.frob_error)).0,
        mean_spectral_error: mean(rows.iter().map(|r| r.spectral_error)).0,
        mean_excess_eps: eps,
        excess_eps_se: eps_se,
        eps_over_sqrt_r: eps / r.sqrt(),
        eps_times_sqrt_p: eps * first.p.sqrt(),
        // r log r vanishes at r = 1; leave the rescaled axis undefined there.
        p_over_r_log_r: if r_log_r > 0.0 { first.p / r_log_r } else { f64::NAN },
        p_over_mu0: first.p / first.mu0_target,
    }
}

/// Coverage of the residual bound at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub experiment: String,
    pub d: usize,
    pub r: usize,
    pub mu0_target: f64,
    pub m: usize,
    pub delta: f64,
    pub trials: usize,
    pub evaluated: usize,
    pub held: usize,
    pub coverage: f64,
    /// `1 − 4δ`.
    pub guarantee: f64,
    /// Why the point was skipped; empty when it ran.
    pub skipped_reason: String,
    #[serde(skip)]
    pub grid_index: usize,
}

/// Path of the aggregate file written next to a raw CSV.
pub fn summary_path(raw: &Path) -> PathBuf {
    let stem = raw.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    raw.with_file_name(format!("{stem}.summary.csv"))
}

fn create(path: &Path) -> anyhow::Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    let mut inner = w.into_inner().map_err(|e| anyhow::anyhow!("flushing {}: {e}", path.display()))?;
    inner.flush()?;
    Ok(())
}

/// Writes the raw trial CSV. An empty table still gets its header.
pub fn write_trials(path: &Path, rows: &[TrialRecord]) -> anyhow::Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(TRIAL_HEADER)?;
        w.flush()?;
        return Ok(());
    }
    write_csv(path, rows)
}

pub fn read_trials(path: &Path) -> anyhow::Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != TRIAL_HEADER {
        anyhow::bail!("{} does not have the trial CSV header", path.display());
    }
    let mut rows = Vec::new();
    let mut last_key = None;
    let mut grid_index = 0;
    for rec in r.deserialize() {
        let mut rec: TrialRecord = rec?;
        // Rows arrive sorted; consecutive rows with the same coordinates
        // belong to the same grid point.
        let key = (rec.d, rec.n, rec.r, rec.mu0_target.to_bits(), rec.m, rec.p.to_bits(), rec.m1, rec.m2);
        if last_key.is_some_and(|k| k != key) {
            grid_index += 1;
        }
        last_key = Some(key);
        rec.grid_index = grid_index;
        rows.push(rec);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(grid_index: usize, trial: usize, success: bool, eps: f64) -> TrialRecord {
        TrialRecord {
            experiment: "complete".into(),
            d: 10,
            n: 12,
            r: 2,
            mu0_target: 1.0,
            mu0_realized: 1.0,
            column_mu: 1.5,
            m: 4 + grid_index,
            p: (4 + grid_index) as f64 / 10.0,
            m1: 0,
            m2: 0,
            trial,
            seed: 99,
            raw_queries: 50,
            unique_entries: 40 + trial as u64,
            frob_error: 0.0,
            spectral_error: 0.0,
            excess_eps: eps,
            exact_success: success,
            wall_ms: 1.25,
            grid_index,
        }
    }

    #[test]
    fn header_matches_struct() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row(0, 0, true, 0.0)).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRIAL_HEADER.join(","));
    }

    #[test]
    fn success_rate_is_mean_of_flags() {
        let rows: Vec<_> = (0..8).map(|t| row(0, t, t % 4 != 0, 0.1 * t as f64)).collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        let flags = rows.iter().filter(|r| r.exact_success).count() as f64 / 8.0;
        assert_eq!(agg[0].success_rate, flags);
        assert!((agg[0].success_se - (0.75f64 * 0.25 / 8.0).sqrt()).abs() < 1e-15);
        assert_eq!(agg[0].max_unique_entries, 47);
        assert!((agg[0].mean_excess_eps - 0.35).abs() < 1e-12);
    }

    #[test]
    fn round_trip_and_sorting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/raw.csv");
        let mut rows = vec![row(1, 0, true, 0.0), row(0, 1, false, 0.0), row(0, 0, true, 0.0)];
        sort_records(&mut rows);
        assert_eq!(rows.iter().map(|r| (r.grid_index, r.trial)).collect::<Vec<_>>(), [(0, 0), (0, 1), (1, 0)]);
        write_trials(&path, &rows).unwrap();
        let back = read_trials(&path).unwrap();
        assert_eq!(back, rows);
        assert_eq!(summary_path(&path), dir.path().join("out/raw.summary.csv"));
    }

    #[test]
    fn empty_table_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_trials(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), TRIAL_HEADER.join(","));
        assert!(read_trials(&path).unwrap().is_empty());
    }
}
