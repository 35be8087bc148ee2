//! Finite-moment test for cluster scores.
//!
//! The null hypothesis is that the r-th moment of the cluster score norm
//! is finite. The test looks only at the top k order statistics of the
//! per-cluster score magnitudes, location-and-scale normalized to v*,
//! whose limiting joint density f(v*; xi) depends on one tail-shape
//! parameter xi (xi < 1 inside the null, xi > 1 under the alternative).
//! The decision rule integrates f over xi in [1,2] against a uniform
//! probability measure and over [0,1] against a calibrated measure
//! c * Uniform[0,1], rejecting when the ratio exceeds one. The constant
//! c is set by Monte Carlo so the rejection rate at null shapes stays at
//! or below a target size; calibrations are persisted in a flat-file
//! store and shipped for common k.

use crate::error::{Error, Result};
use crate::quadrature::{log_integrate_unit, substitution_breaks};
use crate::regression::ScoreMatrix;
use crate::rng::{substream, Role};
use crate::stats::{gl64, ln_factorial, log_sum_exp};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::sync::OnceLock;

const QUAD_REL_TOL: f64 = 1e-8;
const QUAD_MAX_LEVELS: u32 = 6;
const STORE_VERSION: u32 = 1;

/// Environment variable naming a directory whose calibrations.txt
/// overrides the built-in calibration store.
pub const CALIB_DIR_ENV: &str = "CLUSTERGUARD_CALIB_DIR";

/// File name looked up inside the calibration directory.
pub const CALIB_FILE: &str = "calibrations.txt";

fn breaks() -> &'static [f64] {
    static B: OnceLock<Vec<f64>> = OnceLock::new();
    B.get_or_init(substitution_breaks)
}

/// Per-cluster score magnitudes ||S_g||^r for r in {1, 2}.
pub fn score_magnitudes(scores: &ScoreMatrix, r: u32) -> Result<Vec<f64>> {
    if r != 1 && r != 2 {
        return Err(Error::InvalidArgument(format!("r must be 1 or 2, got {r}")));
    }
    Ok(scores
        .rows()
        .row_iter()
        .map(|row| {
            let sumsq: f64 = row.iter().map(|s| s * s).sum();
            if r == 1 {
                sumsq.sqrt()
            } else {
                sumsq
            }
        })
        .collect())
}

/// Location-scale normalization of the top k descending order statistics:
/// v*_i = (A_(i) - A_(k)) / (A_(1) - A_(k)), so v*_1 = 1 and v*_k = 0.
pub fn normalize_top_k(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("k must be at least 3, got {k}")));
    }
    if values.len() < k {
        return Err(Error::InsufficientData(format!(
            "need at least k={k} values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = &sorted[..k];
    let spread = top[0] - top[k - 1];
    if spread <= 0.0 {
        return Err(Error::Degenerate(
            "largest and k-th largest magnitudes coincide; no scale information".into(),
        ));
    }
    Ok(top.iter().map(|a| (a - top[k - 1]) / spread).collect())
}

fn validate_vstar(v: &[f64]) -> Result<usize> {
    let k = v.len();
    if k < 3 {
        return Err(Error::InvalidArgument(format!("v* must have length >= 3, got {k}")));
    }
    if v[0] != 1.0 || v[k - 1] != 0.0 {
        return Err(Error::InvalidArgument("v* must start at 1 and end at 0".into()));
    }
    if v.windows(2).any(|w| !(w[0] >= w[1])) || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("v* must be nonincreasing and finite".into()));
    }
    Ok(k)
}

/// Log of the limiting joint density f(v*; xi) of the normalized top-k
/// vector under tail shape xi >= 0:
///
///   f = Gamma(k) * integral over s in (0,inf) of
///       s^{k-2} * exp( -(1+1/xi) * [log(1+xi s) + sum_mid log(1+xi v*_i s)] ) ds
///
/// with the xi = 0 analytic limit Gamma(k) Gamma(k-1) / (1 + sum_mid v*_i)^{k-1}.
/// The integral runs in log space on the u = s/(1+s) substitution.
pub fn log_fv_density(v_star: &[f64], xi: f64) -> Result<f64> {
    let k = validate_vstar(v_star)?;
    if !xi.is_finite() || xi < 0.0 {
        return Err(Error::InvalidArgument(format!("xi must be finite and >= 0, got {xi}")));
    }
    let middle = &v_star[1..k - 1];
    if xi == 0.0 {
        let sum: f64 = middle.iter().sum();
        return Ok(
            ln_factorial((k - 1) as u64) + ln_factorial((k - 2) as u64)
                - (k - 1) as f64 * sum.ln_1p(),
        );
    }
    // each strictly positive coefficient contributes (1+1/xi) to the tail
    // decay in s; too many ties at zero leave the integral divergent
    let active = 1 + middle.iter().filter(|v| **v > 0.0).count();
    let decay = (1.0 + 1.0 / xi) * active as f64;
    if decay <= (k - 1) as f64 {
        return Err(Error::Degenerate(format!(
            "density diverges at xi={xi}: only {active} positive coefficients for k={k}"
        )));
    }
    let c = 1.0 + 1.0 / xi;
    let km2 = (k - 2) as f64;
    let log_g = move |u: f64| {
        let one_minus = 1.0 - u;
        let s = u / one_minus;
        let mut logsum = (xi * s).ln_1p();
        for &v in middle {
            if v > 0.0 {
                logsum += (xi * v * s).ln_1p();
            }
        }
        km2 * (u.ln() - one_minus.ln()) - c * logsum - 2.0 * one_minus.ln()
    };
    let log_i = log_integrate_unit(&log_g, breaks(), QUAD_REL_TOL, QUAD_MAX_LEVELS)?;
    Ok(ln_factorial((k - 1) as u64) + log_i)
}

/// Log of the numerator measure-integral (uniform probability on [1,2])
/// and of the unit denominator integral over [0,1] before scaling by c.
fn log_integral_means(v_star: &[f64]) -> Result<(f64, f64)> {
    let rule = gl64();
    let mut num_terms = Vec::with_capacity(rule.len());
    let mut den_terms = Vec::with_capacity(rule.len());
    for &(x, w) in rule {
        let lw = (0.5 * w).ln();
        num_terms.push(log_fv_density(v_star, 1.5 + 0.5 * x)? + lw);
        den_terms.push(log_fv_density(v_star, 0.5 + 0.5 * x)? + lw);
    }
    Ok((log_sum_exp(&num_terms), log_sum_exp(&den_terms)))
}

/// A calibrated denominator measure c * Uniform[0,1] with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibratedMeasure {
    pub k: usize,
    pub size_target: f64,
    pub null_grid: Vec<f64>,
    pub reps: u32,
    pub seed: u64,
    pub c: f64,
    pub lambda_id: String,
}

/// Outcome of the finite-moment test.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTestResult {
    pub r: u32,
    pub k: usize,
    pub v_star: Vec<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub statistic: f64,
    pub reject: bool,
    pub lambda_id: String,
}

/// Runs the moment test on cluster scores: reject the finite r-th moment
/// when the [1,2] integral of f(v*; xi) exceeds the calibrated [0,1]
/// integral.
pub fn moment_test(
    scores: &ScoreMatrix,
    r: u32,
    k: usize,
    lambda: &CalibratedMeasure,
) -> Result<MomentTestResult> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("k must be at least 3, got {k}")));
    }
    if scores.g() < k {
        return Err(Error::InsufficientData(format!(
            "need at least k={k} clusters, got {}",
            scores.g()
        )));
    }
    if lambda.k != k {
        return Err(Error::CalibrationMissing { k });
    }
    let magnitudes = score_magnitudes(scores, r)?;
    let v_star = normalize_top_k(&magnitudes, k)?;
    let (log_num, log_den_unit) = log_integral_means(&v_star)?;
    let log_den = lambda.c.ln() + log_den_unit;
    let statistic = (log_num - log_den).exp();
    Ok(MomentTestResult {
        r,
        k,
        v_star,
        numerator: log_num.exp(),
        denominator: log_den.exp(),
        statistic,
        reject: statistic > 1.0,
        lambda_id: lambda.lambda_id.clone(),
    })
}

/// Draws one v* vector from the limiting null law at tail shape xi0 > 0
/// via cumulative sums of unit exponentials: the top order statistics of
/// a generalized-Pareto tail are Gamma_i^{-xi0} up to location and scale,
/// which the normalization removes.
pub fn sample_null_vstar(k: usize, xi0: f64, rng: &mut impl Rng) -> Vec<f64> {
    assert!(k >= 3, "k must be at least 3");
    assert!(xi0 > 0.0 && xi0.is_finite(), "xi0 must be positive and finite");
    let mut gamma = 0.0;
    let mut a: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.random();
            gamma -= (-u).ln_1p();
            gamma.powf(-xi0)
        })
        .collect();
    let spread = a[0] - a[k - 1];
    let floor = a[k - 1];
    for x in &mut a {
        *x = (*x - floor) / spread;
    }
    a
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn grid_text(grid: &[f64]) -> String {
    grid.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn measure_id(k: usize, size_target: f64, grid: &[f64], reps: u32, seed: u64) -> String {
    let canon = format!(
        "v{STORE_VERSION}|k={k}|size={size_target}|grid={}|reps={reps}|seed={seed}",
        grid_text(grid)
    );
    format!("{:016x}", fnv1a(canon.as_bytes()))
}

/// Calibrates c so that the Monte Carlo rejection rate of the test is at
/// most size_target at every null tail shape in the grid: for each shape,
/// c must cover the (1 - size_target) empirical quantile of the integral
/// ratio over `reps` independent draws from the limiting null law, and
/// the binding shape (in practice the boundary xi0 = 1) sets the result.
/// Deterministic in (seed, ...) regardless of thread count.
pub fn calibrate_lambda(
    k: usize,
    size_target: f64,
    null_grid: &[f64],
    reps: u32,
    seed: u64,
) -> Result<CalibratedMeasure> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("k must be at least 3, got {k}")));
    }
    if !(size_target > 0.0 && size_target < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "size_target must lie in (0, 0.5), got {size_target}"
        )));
    }
    if null_grid.is_empty() || null_grid.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
        return Err(Error::InvalidArgument("null_grid must be nonempty within (0, 1]".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    // index of the empirical quantile that leaves at most
    // floor(size_target * reps) exceedances
    let m = reps as usize - (size_target * reps as f64).floor() as usize;
    let mut c = f64::NEG_INFINITY;
    for (gi, &xi0) in null_grid.iter().enumerate() {
        let mut log_ratios = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = substream(seed, rep as u64, gi as u64, Role::Calibration);
                let v = sample_null_vstar(k, xi0, &mut rng);
                let (log_num, log_den_unit) = log_integral_means(&v)?;
                Ok(log_num - log_den_unit)
            })
            .collect::<Result<Vec<f64>>>()?;
        log_ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let candidate = log_ratios[m - 1].exp();
        if candidate > c {
            c = candidate;
        }
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::CalibrationFailure(format!(
            "no finite positive constant controls size on the grid (got {c})"
        )));
    }
    Ok(CalibratedMeasure {
        k,
        size_target,
        null_grid: null_grid.to_vec(),
        reps,
        seed,
        c,
        lambda_id: measure_id(k, size_target, null_grid, reps, seed),
    })
}

/// Flat-file store of calibrated measures, one record per line.
#[derive(Debug, Clone, Default)]
pub struct CalibrationStore {
    entries: Vec<CalibratedMeasure>,
}

impl CalibrationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CalibratedMeasure] {
        &self.entries
    }

    /// Replaces any record with the same (k, size_target, grid) key.
    pub fn upsert(&mut self, m: CalibratedMeasure) {
        self.entries
            .retain(|e| !(e.k == m.k && e.size_target == m.size_target && e.null_grid == m.null_grid));
        self.entries.push(m);
        self.entries.sort_by(|a, b| {
            (a.k, a.size_target).partial_cmp(&(b.k, b.size_target)).unwrap()
        });
    }

    /// First record matching k and size_target, any grid.
    pub fn lookup(&self, k: usize, size_target: f64) -> Option<&CalibratedMeasure> {
        self.entries.iter().find(|e| e.k == k && e.size_target == size_target)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(first) if first == format!("version={STORE_VERSION}") => {}
            other => {
                return Err(Error::CalibrationFailure(format!(
                    "calibration store must start with version={STORE_VERSION}, found {other:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        for line in lines {
            let mut k = None;
            let mut size = None;
            let mut grid = None;
            let mut reps = None;
            let mut seed = None;
            let mut c = None;
            let mut id = None;
            for field in line.split_whitespace() {
                let (key, value) = field.split_once('=').ok_or_else(|| {
                    Error::CalibrationFailure(format!("malformed store field {field:?}"))
                })?;
                let bad = || Error::CalibrationFailure(format!("malformed store value {field:?}"));
                match key {
                    "k" => k = Some(value.parse::<usize>().map_err(|_| bad())?),
                    "size" => size = Some(value.parse::<f64>().map_err(|_| bad())?),
                    "grid" => {
                        grid = Some(
                            value
                                .split(',')
                                .map(|x| x.parse::<f64>())
                                .collect::<std::result::Result<Vec<f64>, _>>()
                                .map_err(|_| bad())?,
                        )
                    }
                    "reps" => reps = Some(value.parse::<u32>().map_err(|_| bad())?),
                    "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad())?),
                    "c" => c = Some(value.parse::<f64>().map_err(|_| bad())?),
                    "id" => id = Some(value.to_string()),
                    _ => {
                        return Err(Error::CalibrationFailure(format!(
                            "unknown store key {key:?}"
                        )))
                    }
                }
            }
            let missing =
                || Error::CalibrationFailure(format!("incomplete store record {line:?}"));
            entries.push(CalibratedMeasure {
                k: k.ok_or_else(missing)?,
                size_target: size.ok_or_else(missing)?,
                null_grid: grid.ok_or_else(missing)?,
                reps: reps.ok_or_else(missing)?,
                seed: seed.ok_or_else(missing)?,
                c: c.ok_or_else(missing)?,
                lambda_id: id.ok_or_else(missing)?,
            });
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# calibrated denominator measures; managed by clusterguard\n");
        out.push_str(&format!("version={STORE_VERSION}\n"));
        for e in &self.entries {
            out.push_str(&format!(
                "k={} size={} grid={} reps={} seed={} c={} id={}\n",
                e.k,
                e.size_target,
                grid_text(&e.null_grid),
                e.reps,
                e.seed,
                e.c,
                e.lambda_id
            ));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    /// Calibrations compiled into the library.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/default_calibrations.txt"))
            .expect("built-in calibration data must parse")
    }
}

/// The active store: calibrations.txt under the directory named by
/// CLUSTERGUARD_CALIB_DIR when that variable is set (absent file means an
/// empty store), otherwise the built-in data.
pub fn default_store() -> Result<CalibrationStore> {
    match std::env::var_os(CALIB_DIR_ENV) {
        Some(dir) => {
            let path = Path::new(&dir).join(CALIB_FILE);
            if path.exists() {
                CalibrationStore::load(&path)
            } else {
                Ok(CalibrationStore::new())
            }
        }
        None => Ok(CalibrationStore::builtin()),
    }
}

/// Looks up a calibrated measure for (k, size_target) in the active store.
pub fn find_calibration(k: usize, size_target: f64) -> Result<CalibratedMeasure> {
    default_store()?
        .lookup(k, size_target)
        .cloned()
        .ok_or(Error::CalibrationMissing { k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::Weighting;
    use crate::rng::pareto;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn score_rows(mags: &[f64]) -> ScoreMatrix {
        // two columns (3/5, 4/5) of each magnitude so the norm is exact
        let g = mags.len();
        let rows = DMatrix::from_fn(g, 2, |i, j| mags[i] * if j == 0 { 0.6 } else { 0.8 });
        ScoreMatrix::from_rows(rows, Weighting::Unweighted).unwrap()
    }

    #[test]
    fn magnitudes_match_pythagoras() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let s = ScoreMatrix::from_rows(m, Weighting::Unweighted).unwrap();
        assert_eq!(score_magnitudes(&s, 1).unwrap(), vec![5.0, 0.0]);
        assert_eq!(score_magnitudes(&s, 2).unwrap(), vec![25.0, 0.0]);
        assert!(score_magnitudes(&s, 3).is_err());
    }

    #[test]
    fn magnitudes_match_elementwise_oracle() {
        let mut rng = substream(3, 0, 0, Role::Calibration);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let s = ScoreMatrix::from_rows(m.clone(), Weighting::Unweighted).unwrap();
        let got = score_magnitudes(&s, 2).unwrap();
        for i in 0..5 {
            let oracle: f64 = (0..3).map(|j| m[(i, j)] * m[(i, j)]).sum();
            assert_relative_eq!(got[i], oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn normalization_is_the_affine_map() {
        assert_eq!(normalize_top_k(&[10.0, 6.0, 2.0], 3).unwrap(), vec![1.0, 0.5, 0.0]);
        assert_eq!(
            normalize_top_k(&[9.0, 7.0, 4.0, 1.0], 4).unwrap(),
            vec![1.0, 0.75, 0.375, 0.0]
        );
        // order of the input must not matter
        assert_eq!(normalize_top_k(&[4.0, 9.0, 1.0, 7.0], 4).unwrap(),
            vec![1.0, 0.75, 0.375, 0.0]);
        assert!(matches!(normalize_top_k(&[5.0, 5.0, 5.0], 3), Err(Error::Degenerate(_))));
        assert!(matches!(normalize_top_k(&[1.0, 2.0], 3), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn normalization_ignores_location_and_scale() {
        let base = [11.0, 5.5, 3.25, 2.0, 1.0];
        let v = normalize_top_k(&base, 5).unwrap();
        let shifted: Vec<f64> = base.iter().map(|x| 3.7 * x + 10.0).collect();
        let w = normalize_top_k(&shifted, 5).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        // dyadic rescaling is exact in floating point
        let doubled: Vec<f64> = base.iter().map(|x| 8.0 * x).collect();
        assert_eq!(v, normalize_top_k(&doubled, 5).unwrap());
    }

    #[test]
    fn density_matches_zero_shape_closed_form() {
        let v = [1.0, 0.5, 0.0];
        let f0 = log_fv_density(&v, 0.0).unwrap().exp();
        assert_relative_eq!(f0, 8.0 / 9.0, epsilon = 1e-13);
        // continuity: tiny positive shape agrees with the analytic limit
        let f_eps = log_fv_density(&v, 1e-6).unwrap().exp();
        assert_relative_eq!(f_eps, 8.0 / 9.0, max_relative = 1e-4);
    }

    #[test]
    fn density_matches_exact_partial_fraction_value() {
        // k=3, v*=(1, 1/2, 0), xi=1: 2 * int s/[(1+s)^2 (1+s/2)^2] ds
        // = 24 ln 2 - 16 by partial fractions
        let f = log_fv_density(&[1.0, 0.5, 0.0], 1.0).unwrap().exp();
        assert_relative_eq!(f, 24.0 * std::f64::consts::LN_2 - 16.0, max_relative = 1e-9);
    }

    #[test]
    fn density_handles_slowest_integrable_decay() {
        // k=3, v*=(1, 1/2, 0), xi=2: the u-substituted integrand tends to
        // a positive constant at u -> 1; exact value 6 sqrt(2) - 8
        let f = log_fv_density(&[1.0, 0.5, 0.0], 2.0).unwrap().exp();
        assert_relative_eq!(f, 6.0 * std::f64::consts::SQRT_2 - 8.0, max_relative = 1e-9);
    }

    #[test]
    fn density_handles_interior_ties() {
        // k=4, v*=(1,1,1,0), xi=1: 6 * int s^2 (1+s)^{-6} ds = 6 B(3,3) = 1/5
        let f = log_fv_density(&[1.0, 1.0, 1.0, 0.0], 1.0).unwrap().exp();
        assert_relative_eq!(f, 0.2, max_relative = 1e-9);
    }

    #[test]
    fn density_guards_divergent_tie_patterns() {
        // k=5 with all middle coefficients zero: integrable only when
        // (1 + 1/xi) > k - 1, i.e. xi < 1/3
        let v = [1.0, 0.0, 0.0, 0.0, 0.0];
        let f = log_fv_density(&v, 0.25).unwrap().exp();
        // 24 * int s^3 (1+s/4)^{-5} ds = 24 * 256 * B(4,1) = 1536
        assert_relative_eq!(f, 1536.0, max_relative = 1e-9);
        assert!(matches!(log_fv_density(&v, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn density_positive_and_finite_across_shapes() {
        let mut rng = substream(5, 1, 0, Role::Calibration);
        let v = sample_null_vstar(12, 0.7, &mut rng);
        for xi in [0.1, 0.5, 1.0, 2.0] {
            let lf = log_fv_density(&v, xi).unwrap();
            assert!(lf.is_finite(), "xi={xi}");
        }
    }

    #[test]
    fn density_rejects_malformed_vectors() {
        assert!(log_fv_density(&[0.9, 0.5, 0.0], 1.0).is_err());
        assert!(log_fv_density(&[1.0, 0.5, 0.1], 1.0).is_err());
        assert!(log_fv_density(&[1.0, 0.4, 0.6, 0.0], 1.0).is_err());
        assert!(log_fv_density(&[1.0, 0.5, 0.0], -0.5).is_err());
        assert!(log_fv_density(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn sampler_agrees_with_heavy_tail_order_statistics() {
        // the normalized top-k law from Pareto(alpha) magnitudes is free of
        // the sample size and equals the limiting law at xi0 = r/alpha;
        // compare the second coordinate's empirical distributions
        let k = 5;
        let draws = 2000;
        let mut direct: Vec<f64> = Vec::with_capacity(draws);
        let mut pipeline: Vec<f64> = Vec::with_capacity(draws);
        for rep in 0..draws {
            let mut rng = substream(21, rep as u64, 0, Role::Calibration);
            direct.push(sample_null_vstar(k, 0.5, &mut rng)[1]);
            let mut rng = substream(22, rep as u64, 0, Role::TailMagnitudes);
            let mags: Vec<f64> = (0..40).map(|_| pareto(&mut rng, 2.0)).collect();
            pipeline.push(normalize_top_k(&mags, k).unwrap()[1]);
        }
        direct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pipeline.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sup = 0.0f64;
        for q in 1..20 {
            let i = draws * q / 20;
            sup = sup.max((direct[i] - pipeline[i]).abs());
        }
        assert!(sup < 0.06, "quantile gap {sup}");
    }

    #[test]
    fn log_density_peaks_at_true_shape() {
        let k = 8;
        let (mut at_03, mut at_05, mut at_09) = (0.0, 0.0, 0.0);
        for rep in 0..200 {
            let mut rng = substream(31, rep, 0, Role::Calibration);
            let v = sample_null_vstar(k, 0.5, &mut rng);
            at_03 += log_fv_density(&v, 0.3).unwrap();
            at_05 += log_fv_density(&v, 0.5).unwrap();
            at_09 += log_fv_density(&v, 0.9).unwrap();
        }
        assert!(at_05 > at_03, "{at_05} vs {at_03}");
        assert!(at_05 > at_09, "{at_05} vs {at_09}");
    }

    fn toy_measure(k: usize, c: f64) -> CalibratedMeasure {
        CalibratedMeasure {
            k,
            size_target: 0.05,
            null_grid: vec![1.0],
            reps: 0,
            seed: 0,
            c,
            lambda_id: "toy".into(),
        }
    }

    #[test]
    fn test_statistic_consistency_and_scaling() {
        let mut rng = substream(41, 0, 0, Role::TailMagnitudes);
        let mags: Vec<f64> = (0..30).map(|_| pareto(&mut rng, 1.0)).collect();
        let scores = score_rows(&mags);
        let lambda = toy_measure(6, 2.0);
        let res = moment_test(&scores, 2, 6, &lambda).unwrap();
        assert_eq!(res.reject, res.statistic > 1.0);
        assert!(res.numerator > 0.0 && res.denominator > 0.0);
        assert_relative_eq!(
            res.statistic,
            res.numerator / res.denominator,
            max_relative = 1e-12
        );
        assert_eq!(res.v_star.len(), 6);
        assert_eq!(res.v_star[0], 1.0);
        assert_eq!(res.v_star[5], 0.0);
        // dyadic rescaling of every score leaves the statistic bit-identical
        let scaled: Vec<f64> = mags.iter().map(|m| m * 1024.0).collect();
        let res2 = moment_test(&score_rows(&scaled), 2, 6, &lambda).unwrap();
        assert_eq!(res.statistic.to_bits(), res2.statistic.to_bits());
        // doubling c halves the statistic
        let res3 = moment_test(&scores, 2, 6, &toy_measure(6, 4.0)).unwrap();
        assert_relative_eq!(res3.statistic, res.statistic / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn test_rejects_mismatched_calibration_and_short_samples() {
        let mags: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let scores = score_rows(&mags);
        assert!(matches!(
            moment_test(&scores, 2, 5, &toy_measure(7, 1.0)),
            Err(Error::CalibrationMissing { k: 5 })
        ));
        assert!(matches!(
            moment_test(&scores, 2, 11, &toy_measure(11, 1.0)),
            Err(Error::InsufficientData(_))
        ));
        assert!(moment_test(&scores, 2, 2, &toy_measure(2, 1.0)).is_err());
    }

    #[test]
    fn calibration_is_deterministic_and_controls_size() {
        let k = 5;
        let a = calibrate_lambda(k, 0.05, &[1.0], 300, 9).unwrap();
        let b = calibrate_lambda(k, 0.05, &[1.0], 300, 9).unwrap();
        assert_eq!(a.c.to_bits(), b.c.to_bits());
        assert_eq!(a.lambda_id, b.lambda_id);
        let other_seed = calibrate_lambda(k, 0.05, &[1.0], 300, 10).unwrap();
        assert_ne!(a.c.to_bits(), other_seed.c.to_bits());
        assert_ne!(a.lambda_id, other_seed.lambda_id);
        // size re-simulated on fresh draws stays near the target
        let mut rejects = 0;
        for rep in 0..300u64 {
            let mut rng = substream(77, rep, 0, Role::Calibration);
            let v = sample_null_vstar(k, 1.0, &mut rng);
            let (n, d) = log_integral_means(&v).unwrap();
            if (n - d).exp() > a.c {
                rejects += 1;
            }
        }
        let rate = rejects as f64 / 300.0;
        assert!(rate <= 0.05 + 0.04, "re-simulated size {rate}");
        // interior null shapes reject no more often than the boundary
        let mut interior = 0;
        for rep in 0..300u64 {
            let mut rng = substream(78, rep, 0, Role::Calibration);
            let v = sample_null_vstar(k, 0.5, &mut rng);
            let (n, d) = log_integral_means(&v).unwrap();
            if (n - d).exp() > a.c {
                interior += 1;
            }
        }
        assert!(interior <= rejects, "interior {interior} vs boundary {rejects}");
    }

    #[test]
    fn calibration_validates_inputs() {
        assert!(calibrate_lambda(2, 0.05, &[1.0], 10, 1).is_err());
        assert!(calibrate_lambda(5, 0.6, &[1.0], 10, 1).is_err());
        assert!(calibrate_lambda(5, 0.05, &[], 10, 1).is_err());
        assert!(calibrate_lambda(5, 0.05, &[1.5], 10, 1).is_err());
        assert!(calibrate_lambda(5, 0.05, &[1.0], 0, 1).is_err());
    }

    #[test]
    fn store_round_trips_through_text_and_disk() {
        let mut store = CalibrationStore::new();
        let m = calibrate_lambda(4, 0.05, &[0.5, 1.0], 50, 3).unwrap();
        store.upsert(m.clone());
        store.upsert(CalibratedMeasure { c: 99.0, ..m.clone() }); // replaces
        assert_eq!(store.entries().len(), 1);
        assert_eq!(store.lookup(4, 0.05).unwrap().c, 99.0);
        assert!(store.lookup(4, 0.10).is_none());
        assert!(store.lookup(5, 0.05).is_none());

        let reparsed = CalibrationStore::parse(&store.to_text()).unwrap();
        assert_eq!(reparsed.entries(), store.entries());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calibrations.txt");
        store.save(&path).unwrap();
        assert_eq!(CalibrationStore::load(&path).unwrap().entries(), store.entries());
    }

    #[test]
    fn store_rejects_corrupt_input() {
        assert!(CalibrationStore::parse("").is_err());
        assert!(CalibrationStore::parse("version=2\n").is_err());
        assert!(CalibrationStore::parse("version=1\nk=5 size=0.05\n").is_err());
        assert!(CalibrationStore::parse("version=1\nnonsense\n").is_err());
        assert!(CalibrationStore::parse("version=1\nk=x size=0.05 grid=1 reps=1 seed=1 c=1 id=a\n").is_err());
    }

    #[test]
    fn builtin_store_parses() {
        let store = CalibrationStore::builtin();
        for e in store.entries() {
            assert!(e.c > 0.0 && e.k >= 3);
        }
    }
}
