//! Command-line front end for cluster-robust regression inference,
//! tail diagnostics, the finite-moment score test, and the Monte Carlo
//! harness. Results go to stdout as JSON; plot-ready data go to CSV
//! files. Exit codes: 0 success, 2 file error, 3 schema or argument
//! error, 4 singular design, 5 missing calibration, 1 anything else.

mod emit;
mod ingest;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use clusterguard::momenttest::{
    calibrate_lambda, find_calibration, moment_test, CalibrationStore, CALIB_DIR_ENV, CALIB_FILE,
};
use clusterguard::regression::{cluster_scores, ols_fit};
use clusterguard::simulation::{run_coverage_study, tail_index_experiment, SimConfig};
use clusterguard::taildiag::{hill_series, rank_size_fit};
use clusterguard::{cr_fit, wcr_fit, ClusterDataset, Weighting};

use emit::{
    print_json, CalibrateDocument, DiagnoseDocument, FitDocument, FitOut, MomentTestDocument,
    SimulateDocument, SizesSummary, TailsimDocument,
};
use ingest::Schema;

#[derive(Debug)]
pub enum CliError {
    File(String),
    Schema(String),
    Singular(String),
    CalibrationMissing(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::File(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Singular(_) => 4,
            CliError::CalibrationMissing(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::File(m)
            | CliError::Schema(m)
            | CliError::Singular(m)
            | CliError::CalibrationMissing(m)
            | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<clusterguard::Error> for CliError {
    fn from(e: clusterguard::Error) -> Self {
        use clusterguard::Error::*;
        match e {
            SingularDesign { .. } => CliError::Singular(e.to_string()),
            CalibrationMissing { .. } => CliError::CalibrationMissing(e.to_string()),
            Io(_) => CliError::File(e.to_string()),
            InvalidArgument(_) | InsufficientData(_) => CliError::Schema(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

const EXIT_CODE_HELP: &str = "Exit codes:\n  \
    0  success\n  \
    2  file error (unreadable or unwritable path)\n  \
    3  schema or argument error (bad columns, missing values, invalid flags)\n  \
    4  singular design matrix\n  \
    5  calibration missing (run `clusterguard calibrate --k <k>`)\n  \
    1  any other failure";

#[derive(Parser)]
#[command(name = "clusterguard", version, after_help = EXIT_CODE_HELP)]
#[command(about = "Cluster-robust regression inference and heavy-tail diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Columns selecting cluster labels, outcome, and regressors in a CSV.
#[derive(Args)]
struct SchemaArgs {
    /// Input CSV (RFC-4180-style, header row required, UTF-8)
    #[arg(long)]
    csv: PathBuf,
    /// Column holding cluster labels (compared as exact strings)
    #[arg(long)]
    cluster_col: String,
    /// Column holding the outcome
    #[arg(long)]
    outcome_col: String,
    /// Comma-separated regressor columns
    #[arg(long, value_delimiter = ',', required = true)]
    regressor_cols: Vec<String>,
    /// Fit without an intercept column
    #[arg(long)]
    no_intercept: bool,
}

impl SchemaArgs {
    fn schema(&self) -> Schema {
        Schema {
            cluster_col: self.cluster_col.clone(),
            outcome_col: self.outcome_col.clone(),
            regressor_cols: self.regressor_cols.clone(),
            add_intercept: !self.no_intercept,
        }
    }

    fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.regressor_cols.len() + 1);
        if !self.no_intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.regressor_cols.iter().cloned());
        names
    }

    fn read(&self) -> Result<ClusterDataset, CliError> {
        ingest::read_dataset(&self.csv, &self.schema())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodChoice {
    Cr,
    Wcr,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingChoice {
    Unweighted,
    InverseSize,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Fit OLS with cluster-robust (CR) or inverse-size-weighted (WCR)
    /// confidence intervals
    Fit {
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodChoice,
        /// Confidence level in (0, 1)
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Hill series and rank-size fit for cluster sizes, as plot-ready CSVs
    Diagnose {
        /// CSV whose cluster-label column defines the sizes
        #[arg(long, requires = "cluster_col", conflicts_with = "sizes")]
        csv: Option<PathBuf>,
        /// Cluster-label column in --csv
        #[arg(long)]
        cluster_col: Option<String>,
        /// Plain text file with one cluster size per line (# comments allowed)
        #[arg(long, required_unless_present = "csv")]
        sizes: Option<PathBuf>,
        /// Top fraction of clusters used by the rank-size fit
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Largest k in the Hill series; 0 means n/2
        #[arg(long, default_value_t = 0)]
        k_max: usize,
        /// Directory receiving hill.csv and ranksize.csv
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Test whether cluster scores have a finite r-th moment
    MomentTest {
        #[command(flatten)]
        schema: SchemaArgs,
        /// Moment order under test (1 or 2)
        #[arg(long, default_value_t = 2)]
        r: u32,
        /// Number of top order statistics; 0 means min(G/2, 50)
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Size target the calibration must match
        #[arg(long, default_value_t = 0.05)]
        size_target: f64,
    },
    /// Monte Carlo coverage study of CR and WCR confidence intervals
    Simulate {
        /// Comma-separated cluster counts
        #[arg(long, value_delimiter = ',', default_value = "25,50")]
        g: Vec<usize>,
        /// Comma-separated within-cluster correlations
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
        rho: Vec<f64>,
        /// Comma-separated cluster-size tail exponents
        #[arg(long, value_delimiter = ',', default_value = "1.25,1.5,1.75,2.0")]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        reps: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory receiving coverage.csv and coverage.json
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Calibrate the denominator measure for the moment test and store it
    Calibrate {
        /// Comma-separated k values to calibrate
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        size_target: f64,
        /// Null tail shapes in (0, 1]; the boundary 1.0 binds
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        reps: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Store file; defaults to $CLUSTERGUARD_CALIB_DIR/calibrations.txt
        /// or ./calibrations.txt
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hill-estimate the tail of simulated cluster sums of heavy-tailed
    /// scores, with and without inverse-size weighting
    Tailsim {
        /// Tail exponent of individual scores
        #[arg(long, default_value_t = 3.0)]
        alpha: f64,
        /// Tail exponent of cluster sizes
        #[arg(long, default_value_t = 1.5)]
        beta: f64,
        /// Number of clusters
        #[arg(long, default_value_t = 100_000)]
        g: usize,
        #[arg(long, value_enum, default_value = "both")]
        weighting: WeightingChoice,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::File(format!("cannot write {}: {e}", path.display())))
}

fn cmd_fit(schema: &SchemaArgs, method: MethodChoice, level: f64) -> Result<(), CliError> {
    let data = schema.read()?;
    let names = schema.coefficient_names();
    let mut fits = Vec::new();
    if matches!(method, MethodChoice::Cr | MethodChoice::Both) {
        fits.push(FitOut::from_fit(&cr_fit(&data, level)?, &names));
    }
    if matches!(method, MethodChoice::Wcr | MethodChoice::Both) {
        fits.push(FitOut::from_fit(&wcr_fit(&data, level)?, &names));
    }
    let doc = FitDocument {
        g: data.g(),
        n: data.n(),
        sizes: SizesSummary::from_sizes(&data.sizes()),
        fits,
    };
    print_json(&doc);
    Ok(())
}

fn cmd_diagnose(
    csv: Option<&Path>,
    cluster_col: Option<&str>,
    sizes_path: Option<&Path>,
    fraction: f64,
    k_max: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    let sizes: Vec<usize> = match (csv, sizes_path) {
        (Some(path), None) => {
            let col = cluster_col
                .ok_or_else(|| CliError::Schema("--csv requires --cluster-col".into()))?;
            ingest::read_sizes_from_csv(path, col)?
        }
        (None, Some(path)) => ingest::read_sizes_file(path)?,
        _ => return Err(CliError::Schema("give exactly one of --csv or --sizes".into())),
    };
    let values: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();

    let series = hill_series(&values, k_max)?;
    let mut hill_csv = String::from("k,beta_hat,ci_lo,ci_hi\n");
    let mut hill_rows = 0usize;
    let mut degenerate_k = 0usize;
    for (k, est) in series.k_values.iter().zip(&series.estimates) {
        match est {
            Some(e) => {
                hill_csv.push_str(&format!("{},{},{},{}\n", k, e.beta_hat, e.ci_lo, e.ci_hi));
                hill_rows += 1;
            }
            None => degenerate_k += 1,
        }
    }

    // All-equal sizes leave both diagnostics degenerate; report that as
    // inconclusive rather than failing.
    let rank_fit = match rank_size_fit(&values, fraction) {
        Ok(fit) => Some(fit),
        Err(clusterguard::Error::Degenerate(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut ranksize_csv = String::from("log_size,log_rank\n");
    if let Some(fit) = &rank_fit {
        for (log_size, log_rank) in &fit.points {
            ranksize_csv.push_str(&format!("{},{}\n", log_size, log_rank));
        }
    }

    let inconclusive = hill_rows == 0;
    let cannot_rule_out = if inconclusive {
        None
    } else {
        Some(series.estimates.iter().flatten().any(|e| e.ci_lo < 2.0))
    };

    let hill_path = out_dir.join("hill.csv");
    let ranksize_path = out_dir.join("ranksize.csv");
    write_file(&hill_path, &hill_csv)?;
    write_file(&ranksize_path, &ranksize_csv)?;

    let doc = DiagnoseDocument {
        n_clusters: sizes.len(),
        k_max: *series.k_values.last().unwrap_or(&0),
        fraction,
        hill_rows,
        degenerate_k,
        rank_size_slope: rank_fit.as_ref().map(|f| f.slope),
        rank_size_intercept: rank_fit.as_ref().map(|f| f.intercept),
        cannot_rule_out_beta_below_2: cannot_rule_out,
        inconclusive,
        hill_csv: hill_path.display().to_string(),
        ranksize_csv: ranksize_path.display().to_string(),
    };
    print_json(&doc);
    Ok(())
}

fn cmd_moment_test(
    schema: &SchemaArgs,
    r: u32,
    k: usize,
    size_target: f64,
) -> Result<(), CliError> {
    if !(r == 1 || r == 2) {
        return Err(CliError::Schema(format!("moment order r must be 1 or 2, got {r}")));
    }
    let data = schema.read()?;
    let k = if k == 0 { (data.g() / 2).min(50) } else { k };
    let lambda = find_calibration(k, size_target)?;
    let theta_hat = ols_fit(&data)?;
    let scores = cluster_scores(&data, &theta_hat, Weighting::Unweighted);
    let result = moment_test(&scores, r, k, &lambda)?;
    let doc = MomentTestDocument { g: data.g(), result, calibration: lambda };
    print_json(&doc);
    Ok(())
}

fn cmd_simulate(
    g: &[usize],
    rho: &[f64],
    beta: &[f64],
    reps: u32,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut grid = Vec::with_capacity(g.len() * rho.len() * beta.len());
    for &gv in g {
        for &rv in rho {
            for &bv in beta {
                grid.push(SimConfig::table_cell(gv, rv, bv, reps, seed));
            }
        }
    }
    let table = run_coverage_study(&grid)?;
    write_file(&out_dir.join("coverage.csv"), &table.to_csv())?;
    let doc = SimulateDocument { seed, n_reps: reps, table };
    let json = serde_json::to_string_pretty(&doc).expect("serializable document");
    write_file(&out_dir.join("coverage.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn default_store_path() -> PathBuf {
    match std::env::var_os(CALIB_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(CALIB_FILE),
        None => PathBuf::from(CALIB_FILE),
    }
}

fn cmd_calibrate(
    ks: &[usize],
    size_target: f64,
    grid: &[f64],
    reps: u32,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let path = out.unwrap_or_else(default_store_path);
    let mut store =
        if path.exists() { CalibrationStore::load(&path)? } else { CalibrationStore::new() };
    let mut entries = Vec::with_capacity(ks.len());
    for &k in ks {
        let measure = calibrate_lambda(k, size_target, grid, reps, seed)?;
        store.upsert(measure.clone());
        entries.push(measure);
    }
    store.save(&path)?;
    let doc = CalibrateDocument { store_path: path.display().to_string(), entries };
    print_json(&doc);
    Ok(())
}

fn cmd_tailsim(
    alpha: f64,
    beta: f64,
    g: usize,
    weighting: WeightingChoice,
    seed: u64,
) -> Result<(), CliError> {
    let choices: &[Weighting] = match weighting {
        WeightingChoice::Unweighted => &[Weighting::Unweighted],
        WeightingChoice::InverseSize => &[Weighting::InverseSize],
        WeightingChoice::Both => &[Weighting::Unweighted, Weighting::InverseSize],
    };
    let mut results = Vec::with_capacity(choices.len());
    for &w in choices {
        results.push(tail_index_experiment(alpha, beta, g, w, seed)?);
    }
    print_json(&TailsimDocument { seed, results });
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit { schema, method, level } => cmd_fit(&schema, method, level),
        Command::Diagnose { csv, cluster_col, sizes, fraction, k_max, out_dir } => cmd_diagnose(
            csv.as_deref(),
            cluster_col.as_deref(),
            sizes.as_deref(),
            fraction,
            k_max,
            &out_dir,
        ),
        Command::MomentTest { schema, r, k, size_target } => {
            cmd_moment_test(&schema, r, k, size_target)
        }
        Command::Simulate { g, rho, beta, reps, seed, out_dir } => {
            cmd_simulate(&g, &rho, &beta, reps, seed, &out_dir)
        }
        Command::Calibrate { k, size_target, grid, reps, seed, out } => {
            cmd_calibrate(&k, size_target, &grid, reps, seed, out)
        }
        Command::Tailsim { alpha, beta, g, weighting, seed } => {
            cmd_tailsim(alpha, beta, g, weighting, seed)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
