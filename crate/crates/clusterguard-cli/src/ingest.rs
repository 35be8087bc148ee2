//! CSV ingestion: map a labeled long-format table onto ClusterDataset,
//! rejecting missing or unparsable cells with their line numbers.

use crate::CliError;
use clusterguard::{Cluster, ClusterDataset};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::path::Path;

/// Column selection for fit-style commands.
pub struct Schema {
    pub cluster_col: String,
    pub outcome_col: String,
    pub regressor_cols: Vec<String>,
    pub add_intercept: bool,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Schema(format!("column {name:?} not found in header")))
}

/// Formats offending line numbers, truncating long lists.
fn lines_summary(lines: &[u64]) -> String {
    const SHOW: usize = 8;
    let shown: Vec<String> = lines.iter().take(SHOW).map(|l| l.to_string()).collect();
    if lines.len() > SHOW {
        format!("{} and {} more", shown.join(", "), lines.len() - SHOW)
    } else {
        shown.join(", ")
    }
}

/// Reads the CSV at `path` into clusters keyed by the label column, in
/// first-appearance order. Every selected cell must parse as a finite
/// number; offending rows are reported by file line number (header = 1).
pub fn read_dataset(path: &Path, schema: &Schema) -> Result<ClusterDataset, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::File(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::File(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let cluster_idx = column_index(&headers, &schema.cluster_col)?;
    let outcome_idx = column_index(&headers, &schema.outcome_col)?;
    let regressor_idx: Vec<usize> = schema
        .regressor_cols
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_, _>>()?;

    // rows per label, in first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(f64, Vec<f64>)>> = HashMap::new();
    let mut bad_lines: Vec<u64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record =
            record.map_err(|e| CliError::File(format!("cannot read {}: {e}", path.display())))?;
        let cell = |idx: usize| -> Option<f64> {
            let raw = record.get(idx)?.trim();
            if raw.is_empty() {
                return None;
            }
            raw.parse::<f64>().ok().filter(|v| v.is_finite())
        };
        let label = match record.get(cluster_idx).map(str::trim) {
            Some(l) if !l.is_empty() => l.to_string(),
            _ => {
                bad_lines.push(line);
                continue;
            }
        };
        let outcome = cell(outcome_idx);
        let regressors: Vec<Option<f64>> = regressor_idx.iter().map(|&j| cell(j)).collect();
        match (outcome, regressors.iter().all(Option::is_some)) {
            (Some(y), true) => {
                let xs = regressors.into_iter().map(Option::unwrap).collect();
                if !groups.contains_key(&label) {
                    order.push(label.clone());
                }
                groups.entry(label).or_default().push((y, xs));
            }
            _ => bad_lines.push(line),
        }
    }
    if !bad_lines.is_empty() {
        return Err(CliError::Schema(format!(
            "{} row(s) with missing or non-numeric values in selected columns: line(s) {}",
            bad_lines.len(),
            lines_summary(&bad_lines)
        )));
    }
    if order.is_empty() {
        return Err(CliError::Schema("no data rows".into()));
    }

    let p_x = schema.regressor_cols.len();
    let intercept = schema.add_intercept as usize;
    let clusters = order
        .into_iter()
        .map(|label| {
            let rows = groups.remove(&label).unwrap();
            let n = rows.len();
            let y = DVector::from_iterator(n, rows.iter().map(|r| r.0));
            let x = DMatrix::from_fn(n, intercept + p_x, |i, j| {
                if schema.add_intercept && j == 0 {
                    1.0
                } else {
                    rows[i].1[j - intercept]
                }
            });
            Cluster { id: label, y, x }
        })
        .collect();
    ClusterDataset::new(clusters).map_err(CliError::from)
}

/// Cluster sizes straight from the label column of a CSV.
pub fn read_sizes_from_csv(path: &Path, cluster_col: &str) -> Result<Vec<usize>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::File(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::File(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let idx = column_index(&headers, cluster_col)?;
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::File(format!("cannot read {}: {e}", path.display())))?;
        match record.get(idx).map(str::trim) {
            Some(l) if !l.is_empty() => {
                if !counts.contains_key(l) {
                    order.push(l.to_string());
                }
                *counts.entry(l.to_string()).or_insert(0) += 1;
            }
            _ => {
                return Err(CliError::Schema(format!(
                    "empty cluster label at line {}",
                    i + 2
                )))
            }
        }
    }
    if order.is_empty() {
        return Err(CliError::Schema("no data rows".into()));
    }
    Ok(order.into_iter().map(|l| counts[&l]).collect())
}

/// Cluster sizes from a plain text file, one positive integer per line.
pub fn read_sizes_file(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::File(format!("cannot read {}: {e}", path.display())))?;
    let mut sizes = Vec::new();
    let mut bad_lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.parse::<usize>() {
            Ok(n) if n > 0 => sizes.push(n),
            _ => bad_lines.push(i as u64 + 1),
        }
    }
    if !bad_lines.is_empty() {
        return Err(CliError::Schema(format!(
            "non-integer size entries at line(s) {}",
            lines_summary(&bad_lines)
        )));
    }
    if sizes.is_empty() {
        return Err(CliError::Schema("no sizes in file".into()));
    }
    Ok(sizes)
}
