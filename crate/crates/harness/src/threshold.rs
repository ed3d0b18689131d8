//! Locating empirical thresholds such as "the smallest m with 90% success".
//!
//! Success rates are noisy and need not be monotone in `m`, so crossings are
//! read off an isotonic (pool-adjacent-violators) fit rather than the raw
//! rates. The search starts from a coarse grid and repeatedly subdivides the
//! bracketing interval.

/// A measured success rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub m: usize,
    pub successes: usize,
    pub trials: usize,
}

impl RatePoint {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Weighted nondecreasing least-squares fit of `values`.
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // Blocks of (mean, weight, count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, c2) = blocks.pop().unwrap();
            let (v1, w1, c1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, c)| std::iter::repeat_n(v, c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// The fit crosses the target between two evaluated points.
    Bracketed,
    /// Already at or above the target at the smallest evaluated `m`.
    BelowGrid,
    /// Never reaches the target.
    AboveGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    pub target: f64,
    /// Interpolated crossing; `None` when the target is never reached.
    pub m_star: Option<f64>,
    pub crossing: Crossing,
    /// Every evaluated point, sorted by `m`.
    pub points: Vec<RatePoint>,
}

/// Reads the crossing of `target` off the isotonic fit of `points`.
pub fn crossing(points: &[RatePoint], target: f64) -> (Option<f64>, Crossing, Option<(usize, usize)>) {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.m);
    if pts.is_empty() {
        return (None, Crossing::AboveGrid, None);
    }
    let rates: Vec<f64> = pts.iter().map(RatePoint::rate).collect();
    let weights: Vec<f64> = pts.iter().map(|p| p.trials as f64).collect();
    let fit = isotonic_fit(&rates, &weights);
    match fit.iter().position(|&f| f >= target) {
        None => (None, Crossing::AboveGrid, None),
        Some(0) => (Some(pts[0].m as f64), Crossing::BelowGrid, None),
        Some(i) => {
            let (m0, m1) = (pts[i - 1].m as f64, pts[i].m as f64);
            let (f0, f1) = (fit[i - 1], fit[i]);
            let m = m0 + (target - f0) / (f1 - f0) * (m1 - m0);
            (Some(m), Crossing::Bracketed, Some((pts[i - 1].m, pts[i].m)))
        }
    }
}

/// Coarse-to-fine search for the crossing of `target`.
///
/// `evaluate` receives a batch of new `m` values and returns one point per
/// value. Each round inserts up to `per_round` evenly spaced values inside
/// the current bracket; the search stops once the bracket has width one or
/// after `rounds` rounds.
pub fn locate<E, F>(
    target: f64,
    coarse: &[usize],
    rounds: usize,
    per_round: usize,
    mut evaluate: F,
) -> Result<ThresholdEstimate, E>
where
    F: FnMut(&[usize]) -> Result<Vec<RatePoint>, E>,
{
    let mut grid: Vec<usize> = coarse.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let mut points = evaluate(&grid)?;
    for _ in 0..rounds {
        let (_, kind, bracket) = crossing(&points, target);
        let Some((lo, hi)) = bracket.filter(|_| kind == Crossing::Bracketed) else { break };
        if hi - lo <= 1 {
            break;
        }
        let mut fresh: Vec<usize> = (1..=per_round)
            .map(|k| lo + ((hi - lo) as f64 * k as f64 / (per_round + 1) as f64).round() as usize)
            .filter(|&m| m > lo && m < hi)
            .collect();
        fresh.dedup();
        fresh.retain(|m| !points.iter().any(|p| p.m == *m));
        if fresh.is_empty() {
            break;
        }
        points.extend(evaluate(&fresh)?);
    }
    points.sort_by_key(|p| p.m);
    let (m_star, crossing, _) = crossing(&points, target);
    Ok(ThresholdEstimate { target, m_star, crossing, points })
}

/// Ordinary least squares `y ≈ slope · x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

/// `(max − min) / min` over positive values.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / min
}
