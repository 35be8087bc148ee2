//! OLS and weighted OLS for clustered data with cluster-robust (CR) and
//! weighted cluster-robust (WCR) sandwich variances.
//!
//! CR:  theta = (sum_g X_g'X_g)^{-1} sum_g X_g'Y_g,
//!      V = a_n * B^{-1} (sum_g S_g S_g') B^{-1},  S_g = X_g' U_g.
//! WCR: every cluster's normal-equation contribution is scaled by 1/N_g,
//!      and the meat uses the inverse-size-weighted scores S_g / N_g.
//!
//! The weighting makes the cluster-level score inherit the tail of the
//! individual scores rather than the tail of the cluster sizes, which is
//! what keeps the sandwich variance well behaved when sizes are heavy
//! tailed. The finite-sample factor a_n = ((N-1)/(N-p)) * (G/(G-1)) is
//! applied to both variances.

use crate::dataset::ClusterDataset;
use crate::error::{Error, Result};
use crate::stats::normal_quantile;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

/// Reciprocal-condition-number threshold below which the Gram matrix is
/// treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "CR")]
    Cr,
    #[serde(rename = "WCR")]
    Wcr,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cr => "CR",
            Method::Wcr => "WCR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Weighting {
    #[serde(rename = "unweighted")]
    Unweighted,
    #[serde(rename = "inverse_size")]
    InverseSize,
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::Unweighted => "unweighted",
            Weighting::InverseSize => "inverse_size",
        })
    }
}

/// Per-cluster score rows: row g is S_g (unweighted) or S_g / N_g
/// (inverse size).
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    rows: DMatrix<f64>,
    weighting: Weighting,
}

impl ScoreMatrix {
    /// Wraps externally computed score rows (one row per cluster).
    pub fn from_rows(rows: DMatrix<f64>, weighting: Weighting) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::InvalidArgument("score matrix must be nonempty".into()));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("score entries must be finite".into()));
        }
        Ok(Self { rows, weighting })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Number of clusters.
    pub fn g(&self) -> usize {
        self.rows.nrows()
    }
}

/// A fitted clustered regression: point estimates, sandwich variance, and
/// symmetric normal-quantile confidence intervals.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub method: Method,
    pub theta_hat: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub a_n: f64,
    pub g: usize,
    pub n: usize,
    pub level: f64,
    pub ci: Vec<(f64, f64)>,
}

/// Sum of w_g * X_g'X_g and w_g * X_g'y_g over clusters.
fn weighted_normal_equations(
    data: &ClusterDataset,
    weight: impl Fn(usize) -> f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = data.p();
    let mut gram = DMatrix::zeros(p, p);
    let mut moment = DVector::zeros(p);
    for c in data.clusters() {
        let w = weight(c.size());
        gram.gemm_tr(w, &c.x, &c.x, 1.0);
        moment.gemv_tr(w, &c.x, &c.y, 1.0);
    }
    (gram, moment)
}

/// Cholesky factor of the Gram matrix, after an SVD reciprocal-condition
/// check. Errors with SingularDesign when rcond < RCOND_THRESHOLD.
fn checked_cholesky(gram: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let sv = gram.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0f64, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !rcond.is_finite() || rcond < RCOND_THRESHOLD {
        return Err(Error::SingularDesign { rcond, threshold: RCOND_THRESHOLD });
    }
    Cholesky::new(gram.clone())
        .ok_or(Error::SingularDesign { rcond, threshold: RCOND_THRESHOLD })
}

/// OLS point estimate (sum_g X_g'X_g)^{-1} (sum_g X_g'Y_g), solved by
/// Cholesky factorization rather than explicit inversion.
pub fn ols_fit(data: &ClusterDataset) -> Result<DVector<f64>> {
    let (gram, moment) = weighted_normal_equations(data, |_| 1.0);
    Ok(checked_cholesky(&gram)?.solve(&moment))
}

/// Per-cluster scores S_g = X_g'(y_g - X_g theta), optionally scaled by
/// 1/N_g.
pub fn cluster_scores(
    data: &ClusterDataset,
    theta_hat: &DVector<f64>,
    weighting: Weighting,
) -> ScoreMatrix {
    assert_eq!(theta_hat.len(), data.p(), "theta has wrong length");
    let mut rows = DMatrix::zeros(data.g(), data.p());
    for (g, c) in data.clusters().iter().enumerate() {
        let resid = &c.y - &c.x * theta_hat;
        let mut s = c.x.transpose() * resid;
        if weighting == Weighting::InverseSize {
            s /= c.size() as f64;
        }
        rows.row_mut(g).copy_from(&s.transpose());
    }
    ScoreMatrix { rows, weighting }
}

/// Finite-sample adjustment ((N-1)/(N-p)) * (G/(G-1)).
fn finite_sample_factor(data: &ClusterDataset) -> f64 {
    let n = data.n() as f64;
    let g = data.g() as f64;
    let p = data.p() as f64;
    ((n - 1.0) / (n - p)) * (g / (g - 1.0))
}

/// a_n * B^{-1} (sum_g s_g s_g') B^{-1} for the given Gram factor, with
/// the result symmetrized against roundoff.
fn sandwich(chol: &Cholesky<f64, nalgebra::Dyn>, scores: &ScoreMatrix, a_n: f64) -> DMatrix<f64> {
    let p = scores.rows.ncols();
    let mut meat = DMatrix::zeros(p, p);
    for g in 0..scores.rows.nrows() {
        let s = scores.rows.row(g).transpose();
        meat.ger(1.0, &s, &s, 1.0);
    }
    let half = chol.solve(&meat);
    let mut v = chol.solve(&half.transpose()) * a_n;
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = m;
            v[(j, i)] = m;
        }
    }
    v
}

/// CR sandwich variance and the a_n factor for a given point estimate.
pub fn cr_variance(data: &ClusterDataset, theta_hat: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (gram, _) = weighted_normal_equations(data, |_| 1.0);
    let chol = checked_cholesky(&gram)?;
    let scores = cluster_scores(data, theta_hat, Weighting::Unweighted);
    let a_n = finite_sample_factor(data);
    Ok((sandwich(&chol, &scores, a_n), a_n))
}

fn build_fit(
    method: Method,
    data: &ClusterDataset,
    theta_hat: DVector<f64>,
    vcov: DMatrix<f64>,
    a_n: f64,
    level: f64,
) -> Result<RegressionFit> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0,1)")));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let se = DVector::from_iterator(vcov.nrows(), (0..vcov.nrows()).map(|j| vcov[(j, j)].max(0.0).sqrt()));
    let ci = theta_hat
        .iter()
        .zip(se.iter())
        .map(|(&t, &s)| (t - z * s, t + z * s))
        .collect();
    Ok(RegressionFit {
        method,
        theta_hat,
        vcov,
        se,
        a_n,
        g: data.g(),
        n: data.n(),
        level,
        ci,
    })
}

/// OLS with CR sandwich variance and level-confidence intervals.
pub fn cr_fit(data: &ClusterDataset, level: f64) -> Result<RegressionFit> {
    let theta = ols_fit(data)?;
    let (vcov, a_n) = cr_variance(data, &theta)?;
    build_fit(Method::Cr, data, theta, vcov, a_n, level)
}

/// Weighted (inverse cluster size) estimator with its sandwich variance.
/// Scores in the meat come from WCR residuals and carry the 1/N_g weight.
pub fn wcr_fit(data: &ClusterDataset, level: f64) -> Result<RegressionFit> {
    let (gram, moment) = weighted_normal_equations(data, |n| 1.0 / n as f64);
    let chol = checked_cholesky(&gram)?;
    let theta = chol.solve(&moment);
    let scores = cluster_scores(data, &theta, Weighting::InverseSize);
    let a_n = finite_sample_factor(data);
    let vcov = sandwich(&chol, &scores, a_n);
    build_fit(Method::Wcr, data, theta, vcov, a_n, level)
}
