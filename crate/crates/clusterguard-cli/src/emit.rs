//! Output documents. Floats go through serde_json, whose shortest
//! round-trip encoding re-parses to the identical bits.

use clusterguard::momenttest::{CalibratedMeasure, MomentTestResult};
use clusterguard::simulation::{CoverageTable, TailExperimentResult};
use clusterguard::RegressionFit;
use serde::Serialize;

#[derive(Serialize)]
pub struct SizesSummary {
    pub min: usize,
    pub max: usize,
    /// max / min, the size-imbalance diagnostic.
    pub ratio: f64,
    /// Largest cluster's share of all observations.
    pub max_share: f64,
}

impl SizesSummary {
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let min = *sizes.iter().min().unwrap();
        let max = *sizes.iter().max().unwrap();
        let n: usize = sizes.iter().sum();
        SizesSummary { min, max, ratio: max as f64 / min as f64, max_share: max as f64 / n as f64 }
    }
}

#[derive(Serialize)]
pub struct CoefficientOut {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Serialize)]
pub struct FitOut {
    pub method: String,
    pub level: f64,
    pub a_n: f64,
    pub coefficients: Vec<CoefficientOut>,
}

impl FitOut {
    pub fn from_fit(fit: &RegressionFit, names: &[String]) -> Self {
        let coefficients = names
            .iter()
            .enumerate()
            .map(|(j, name)| CoefficientOut {
                name: name.clone(),
                estimate: fit.theta_hat[j],
                se: fit.se[j],
                ci_lo: fit.ci[j].0,
                ci_hi: fit.ci[j].1,
            })
            .collect();
        FitOut {
            method: fit.method.to_string(),
            level: fit.level,
            a_n: fit.a_n,
            coefficients,
        }
    }
}

#[derive(Serialize)]
pub struct FitDocument {
    pub g: usize,
    pub n: usize,
    pub sizes: SizesSummary,
    pub fits: Vec<FitOut>,
}

#[derive(Serialize)]
pub struct DiagnoseDocument {
    pub n_clusters: usize,
    pub k_max: usize,
    pub fraction: f64,
    /// Hill rows with a defined estimate, as written to hill_csv.
    pub hill_rows: usize,
    /// k values skipped because the top order statistics were tied.
    pub degenerate_k: usize,
    pub rank_size_slope: Option<f64>,
    pub rank_size_intercept: Option<f64>,
    /// True when any Hill CI lower bound sits below 2 (sizes may lack a
    /// finite variance); null when every k was degenerate.
    pub cannot_rule_out_beta_below_2: Option<bool>,
    pub inconclusive: bool,
    pub hill_csv: String,
    pub ranksize_csv: String,
}

#[derive(Serialize)]
pub struct MomentTestDocument {
    pub g: usize,
    #[serde(flatten)]
    pub result: MomentTestResult,
    pub calibration: CalibratedMeasure,
}

#[derive(Serialize)]
pub struct SimulateDocument {
    pub seed: u64,
    pub n_reps: u32,
    #[serde(flatten)]
    pub table: CoverageTable,
}

#[derive(Serialize)]
pub struct CalibrateDocument {
    pub store_path: String,
    pub entries: Vec<CalibratedMeasure>,
}

#[derive(Serialize)]
pub struct TailsimDocument {
    pub seed: u64,
    pub results: Vec<TailExperimentResult>,
}

pub fn print_json<T: Serialize>(doc: &T) {
    println!("{}", serde_json::to_string_pretty(doc).expect("serializable document"));
}
