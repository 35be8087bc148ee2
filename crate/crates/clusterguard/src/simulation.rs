//! Monte Carlo drivers: a clustered regression data-generating process
//! with Pareto cluster sizes and equicorrelated Gaussian noise, coverage
//! studies over a parameter grid, and tail-index experiments for sums of
//! heavy-tailed scores over random cluster sizes.

use crate::dataset::{Cluster, ClusterDataset};
use crate::error::{Error, Result};
use crate::regression::{cr_fit, wcr_fit, Method, Weighting};
use crate::rng::{pareto, standard_normal, substream, Role};
use crate::taildiag::hill_estimate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// One cell of the coverage study design.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub g: usize,
    /// Tail exponent of the cluster-size distribution.
    pub beta: f64,
    /// Within-cluster equicorrelation of both regressor and error.
    pub rho: f64,
    pub theta0: f64,
    pub theta1: f64,
    /// Cluster sizes are ceil(scale * Pareto(1, beta)), so every size
    /// is at least scale.
    pub scale: u32,
    pub n_reps: u32,
    pub seed: u64,
    pub level: f64,
}

impl SimConfig {
    /// The grid cell with the default scale 10, level 0.95 and unit
    /// intercept and slope.
    pub fn table_cell(g: usize, rho: f64, beta: f64, n_reps: u32, seed: u64) -> Self {
        SimConfig { g, beta, rho, theta0: 1.0, theta1: 1.0, scale: 10, n_reps, seed, level: 0.95 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g < 2 {
            return Err(Error::InvalidArgument(format!("need G >= 2 clusters, got {}", self.g)));
        }
        if self.n_reps < 1 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("size tail exponent {} invalid", self.beta)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho {} outside [0, 1)", self.rho)));
        }
        if self.scale < 1 {
            return Err(Error::InvalidArgument("scale must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

/// One coverage result row.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub g: usize,
    pub rho: f64,
    pub beta: f64,
    pub method: Method,
    pub coverage: f64,
    pub n_reps: u32,
    pub mc_stderr: f64,
    /// Replications dropped because the realized design was singular.
    pub excluded: u32,
}

/// Coverage of the slope's confidence interval across the design grid.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    /// CSV with columns G,rho,beta,method,coverage,n_reps,mc_stderr.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("G,rho,beta,method,coverage,n_reps,mc_stderr\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.g, r.rho, r.beta, r.method, r.coverage, r.n_reps, r.mc_stderr
            ));
        }
        out
    }
}

/// Hill estimate for cluster sums (optionally divided by cluster size)
/// of heavy-tailed individual scores.
#[derive(Debug, Clone, Serialize)]
pub struct TailExperimentResult {
    /// Tail exponent of the individual scores.
    pub alpha: f64,
    /// Tail exponent of the cluster sizes.
    pub beta: f64,
    pub weighting: Weighting,
    pub hill_beta_hat: f64,
    pub hill_ci: (f64, f64),
    pub g: usize,
    pub k: usize,
}

fn size_from_uniform(u: f64, beta: f64, scale: u32) -> usize {
    (scale as f64 * (1.0 - u).powf(-1.0 / beta)).ceil() as usize
}

/// Cluster sizes ceil(scale * Pareto(1, beta)) by inverse CDF; every
/// size is at least scale.
pub fn draw_cluster_sizes(g: usize, beta: f64, scale: u32, rng: &mut impl Rng) -> Vec<usize> {
    (0..g).map(|_| size_from_uniform(rng.random(), beta, scale)).collect()
}

/// An n-vector with unit marginal variances and pairwise correlation rho,
/// built as sqrt(rho) * W + sqrt(1-rho) * eps without forming the n x n
/// covariance. The shared W is drawn first, then the n idiosyncratic
/// terms.
pub fn draw_equicorrelated_normal(n: usize, rho: f64, rng: &mut impl Rng) -> DVector<f64> {
    let w = standard_normal(rng);
    let shared = rho.sqrt() * w;
    let idio = (1.0 - rho).sqrt();
    DVector::from_fn(n, |_, _| shared + idio * standard_normal(rng))
}

/// One replication of the data-generating process: Pareto cluster sizes,
/// equicorrelated X and U per cluster (independent substreams), and
/// Y = theta0 + theta1 * X + U with an intercept column.
pub fn generate_dataset(cfg: &SimConfig, rep: u64) -> Result<ClusterDataset> {
    cfg.validate()?;
    let sizes = draw_cluster_sizes(
        cfg.g,
        cfg.beta,
        cfg.scale,
        &mut substream(cfg.seed, rep, 0, Role::Sizes),
    );
    let clusters = sizes
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let xs = draw_equicorrelated_normal(
                n,
                cfg.rho,
                &mut substream(cfg.seed, rep, g as u64, Role::RegressorX),
            );
            let us = draw_equicorrelated_normal(
                n,
                cfg.rho,
                &mut substream(cfg.seed, rep, g as u64, Role::ErrorU),
            );
            let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
            let y = DVector::from_fn(n, |i, _| cfg.theta0 + cfg.theta1 * xs[i] + us[i]);
            Cluster { id: format!("g{g}"), y, x }
        })
        .collect();
    ClusterDataset::new(clusters)
}

/// Whether the slope's confidence interval covers the truth, for CR and
/// WCR; None when the realized design is singular.
fn one_rep(cfg: &SimConfig, rep: u64) -> Result<Option<(bool, bool)>> {
    let data = generate_dataset(cfg, rep)?;
    let cr = match cr_fit(&data, cfg.level) {
        Err(Error::SingularDesign { .. }) => return Ok(None),
        r => r?,
    };
    let wcr = match wcr_fit(&data, cfg.level) {
        Err(Error::SingularDesign { .. }) => return Ok(None),
        r => r?,
    };
    let covers = |ci: &(f64, f64)| ci.0 <= cfg.theta1 && cfg.theta1 <= ci.1;
    Ok(Some((covers(&cr.ci[1]), covers(&wcr.ci[1]))))
}

/// Runs every configuration in the grid, recording the fraction of
/// replications whose 95% (or cfg.level) slope interval covers theta1.
/// Replications run in parallel; the aggregation is a fixed-order fold
/// over replication index, so results do not depend on thread count.
pub fn run_coverage_study(grid: &[SimConfig]) -> Result<CoverageTable> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty simulation grid".into()));
    }
    let mut rows = Vec::with_capacity(grid.len() * 2);
    for cfg in grid {
        cfg.validate()?;
        let outcomes: Vec<Option<(bool, bool)>> = (0..cfg.n_reps as u64)
            .into_par_iter()
            .map(|rep| one_rep(cfg, rep))
            .collect::<Result<_>>()?;
        let excluded = outcomes.iter().filter(|o| o.is_none()).count() as u32;
        let kept = cfg.n_reps - excluded;
        let (cr_hits, wcr_hits) = outcomes.iter().flatten().fold((0u32, 0u32), |acc, &(c, w)| {
            (acc.0 + c as u32, acc.1 + w as u32)
        });
        if kept == 0 {
            return Err(Error::Degenerate(format!(
                "every replication was singular for G={} rho={} beta={}",
                cfg.g, cfg.rho, cfg.beta
            )));
        }
        for (method, hits) in [(Method::Cr, cr_hits), (Method::Wcr, wcr_hits)] {
            let coverage = hits as f64 / kept as f64;
            rows.push(CoverageRow {
                g: cfg.g,
                rho: cfg.rho,
                beta: cfg.beta,
                method,
                coverage,
                n_reps: kept,
                mc_stderr: (coverage * (1.0 - coverage) / kept as f64).sqrt(),
                excluded,
            });
        }
    }
    Ok(CoverageTable { rows })
}

/// Draws G clusters with Pareto(1, beta) sizes (scale 1) and Pareto(1,
/// alpha) individual scores, sums each cluster (dividing by the size
/// under inverse-size weighting), and Hill-estimates the tail of the G
/// sums at k = max(ceil(0.01 G), 50). With beta < alpha the unweighted
/// sums inherit the size tail beta; the weighted sums restore alpha.
pub fn tail_index_experiment(
    alpha: f64,
    beta: f64,
    g: usize,
    weighting: Weighting,
    seed: u64,
) -> Result<TailExperimentResult> {
    if !(alpha > 1.0) || !(beta > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail exponents must exceed 1, got alpha={alpha} beta={beta}"
        )));
    }
    let k = ((0.01 * g as f64).ceil() as usize).max(50);
    if g < k + 1 {
        return Err(Error::InsufficientData(format!("G={g} too small for k={k}")));
    }
    let sizes = draw_cluster_sizes(g, beta, 1, &mut substream(seed, 0, 0, Role::Sizes));
    let sums: Vec<f64> = sizes
        .par_iter()
        .enumerate()
        .map(|(cluster, &n)| {
            let mut rng = substream(seed, 0, cluster as u64, Role::TailMagnitudes);
            let total: f64 = (0..n).map(|_| pareto(&mut rng, alpha)).sum();
            match weighting {
                Weighting::Unweighted => total,
                Weighting::InverseSize => total / n as f64,
            }
        })
        .collect();
    let hill = hill_estimate(&sums, k)?;
    Ok(TailExperimentResult {
        alpha,
        beta,
        weighting,
        hill_beta_hat: hill.beta_hat,
        hill_ci: (hill.ci_lo, hill.ci_hi),
        g,
        k,
    })
}
