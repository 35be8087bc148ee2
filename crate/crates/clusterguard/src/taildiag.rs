//! Tail-index diagnostics: Hill estimator with asymptotic confidence
//! bands, Hill series over a range of k, and log-log rank-size fits.

use crate::error::{Error, Result};
use crate::stats::normal_quantile;

/// One Hill estimate with its normal-band confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillEstimate {
    pub beta_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Hill estimates for k = 2..=k_max; entries are None where the top
/// order statistics are tied (log spacings all zero).
#[derive(Debug, Clone)]
pub struct HillSeries {
    pub n: usize,
    pub k_values: Vec<usize>,
    pub estimates: Vec<Option<HillEstimate>>,
}

/// OLS fit of log(rank) on log(size) over the largest values.
#[derive(Debug, Clone)]
pub struct RankSizeFit {
    pub slope: f64,
    pub intercept: f64,
    /// (log_size, log_rank) pairs, sorted by descending size, rank 1 = largest.
    pub points: Vec<(f64, f64)>,
    pub fraction_used: f64,
}

fn descending(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be positive and finite".into()));
    }
    let mut sorted = values.to_vec();
    // stable descending order; ties keep input order
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sorted)
}

fn hill_on_sorted(sorted: &[f64], k: usize, z: f64) -> Result<HillEstimate> {
    let threshold = sorted[k];
    let mean_log: f64 = sorted[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if mean_log <= 0.0 {
        return Err(Error::Degenerate(format!(
            "top {} order statistics are all equal; no tail information",
            k + 1
        )));
    }
    let beta_hat = 1.0 / mean_log;
    let half = z * beta_hat / (k as f64).sqrt();
    Ok(HillEstimate { beta_hat, ci_lo: beta_hat - half, ci_hi: beta_hat + half })
}

/// Hill tail-index estimate from the top k+1 descending order statistics:
/// beta_hat = 1 / mean(log(X_(i) / X_(k+1)), i = 1..k), with the 95%
/// band beta_hat -+ z * beta_hat / sqrt(k).
pub fn hill_estimate(values: &[f64], k: usize) -> Result<HillEstimate> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 values, got {n}")));
    }
    if k < 2 || k > n - 1 {
        return Err(Error::InvalidArgument(format!("k={k} outside 2..={}", n - 1)));
    }
    let sorted = descending(values)?;
    hill_on_sorted(&sorted, k, normal_quantile(0.975))
}

/// Hill estimates for every k in 2..=k_max. Pass k_max = 0 to use the
/// default floor(n/2). Degenerate k entries are flagged as None.
pub fn hill_series(values: &[f64], k_max: usize) -> Result<HillSeries> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 values, got {n}")));
    }
    let k_max = if k_max == 0 { n / 2 } else { k_max };
    if k_max < 2 || k_max > n - 1 {
        return Err(Error::InvalidArgument(format!("k_max={k_max} outside 2..={}", n - 1)));
    }
    let sorted = descending(values)?;
    let z = normal_quantile(0.975);
    let k_values: Vec<usize> = (2..=k_max).collect();
    let estimates = k_values
        .iter()
        .map(|&k| hill_on_sorted(&sorted, k, z).ok())
        .collect();
    Ok(HillSeries { n, k_values, estimates })
}

/// OLS of log(rank) on log(size) over the largest floor(fraction * n)
/// values, so fraction 0.5 of 51 keeps 25. The slope estimates -beta
/// for a Pareto(beta) tail.
pub fn rank_size_fit(values: &[f64], fraction: f64) -> Result<RankSizeFit> {
    if !(0.0 < fraction && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0,1]")));
    }
    let sorted = descending(values)?;
    let m = (fraction * sorted.len() as f64).floor() as usize;
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "rank-size fit needs at least 3 points, fraction retains {m}"
        )));
    }
    let points: Vec<(f64, f64)> = sorted[..m]
        .iter()
        .enumerate()
        .map(|(i, &s)| (s.ln(), ((i + 1) as f64).ln()))
        .collect();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all retained sizes are equal".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(RankSizeFit { slope, intercept: my - slope * mx, points, fraction_used: fraction })
}
