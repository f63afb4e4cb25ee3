//! CSV ingestion with addressed errors, and the fit/metrics/selection
//! artifacts.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use lpcr::simulation::{fmt17, to_json_17};

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { message: message.into(), exit_code: 2 }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<lpcr::Error> for CliError {
    fn from(err: lpcr::Error) -> Self {
        let exit_code = match err {
            lpcr::Error::ExistenceViolation(_)
            | lpcr::Error::Divergence(_)
            | lpcr::Error::DegenerateLikelihood(_) => 3,
            _ => 2,
        };
        Self { message: err.to_string(), exit_code }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::config(format!("i/o error: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// A parsed numeric table: header names plus an n x m value matrix.
pub struct NumericTable {
    pub headers: Vec<String>,
    pub values: DMatrix<f64>,
}

/// Reads an RFC-4180 CSV with a header row into a dense matrix. Ragged rows
/// and non-numeric cells are rejected with the offending row and column.
pub fn read_numeric_csv(path: &Path) -> CliResult<NumericTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::config(format!("{}: bad header row: {e}", path.display())))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.is_empty() {
        return Err(CliError::config(format!("{}: empty header row", path.display())));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1; // 1-based data row
        let record =
            record.map_err(|e| CliError::config(format!("{}: row {row_no}: {e}", path.display())))?;
        if record.len() != headers.len() {
            return Err(CliError::config(format!(
                "{}: row {row_no} has {} fields, expected {} (ragged rows are not supported)",
                path.display(),
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::config(format!(
                    "{}: row {row_no}, column {:?} (index {j}): not a number: {field:?}",
                    path.display(),
                    headers[j]
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::config(format!(
                    "{}: row {row_no}, column {:?} (index {j}): non-finite value {field:?}",
                    path.display(),
                    headers[j]
                )));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::config(format!("{}: no data rows", path.display())));
    }
    let values = DMatrix::from_fn(rows.len(), headers.len(), |i, j| rows[i][j]);
    Ok(NumericTable { headers, values })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessingArtifact {
    pub response_cols: Vec<String>,
    pub predictor_cols: Vec<String>,
    pub split_index: usize,
    pub y_mean: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct OptimizerArtifact {
    pub iterations: usize,
    pub converged: bool,
    pub restart_values: Vec<f64>,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
}

/// Everything a fit run writes to `fit.json`.
#[derive(Debug, Serialize)]
pub struct FitArtifact {
    pub version: String,
    pub seed: u64,
    pub method: String,
    pub objective_variant: String,
    pub k: usize,
    pub param_count: usize,
    pub n_train: usize,
    pub p: usize,
    pub r: usize,
    pub neg_loglik: f64,
    pub ic_aic: f64,
    pub ic_bic: f64,
    pub tau: f64,
    pub beta: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub loadings: Vec<Vec<f64>>,
    pub optimizer: OptimizerArtifact,
    pub preprocessing: PreprocessingArtifact,
}

/// The subset of `fit.json` the predict command needs.
#[derive(Debug, Deserialize)]
pub struct PredictArtifact {
    pub beta: Vec<Vec<f64>>,
    pub preprocessing: PreprocessingArtifact,
}

#[derive(Debug, Serialize)]
pub struct MetricsArtifact {
    pub n_test: usize,
    pub test_rmse: f64,
    pub baseline_rmse: f64,
    /// Test RMSE divided by the training-mean baseline, so a zero
    /// coefficient scores exactly 1.
    pub relative_rmse: f64,
}

#[derive(Debug, Serialize)]
pub struct SelectionArtifact {
    pub version: String,
    pub method: String,
    pub criterion: String,
    pub k_max: usize,
    pub seed: u64,
    /// `score` is null for candidate orders whose fit failed.
    pub table: Vec<SelectionRow>,
    pub chosen_k: usize,
}

#[derive(Debug, Serialize)]
pub struct SelectionRow {
    pub k: usize,
    pub score: f64,
    pub failed: bool,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(CliError::config("fit artifact holds an empty matrix"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::config("fit artifact holds a ragged matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut body = to_json_17(value);
    body.push('\n');
    std::fs::write(path, body)?;
    Ok(())
}

/// `row,<name>,...` CSV of predictions; `first_row` is the 0-based index of
/// the first predicted row in the source file's data section.
pub fn write_predictions_csv(
    path: &Path,
    response_names: &[String],
    predictions: &DMatrix<f64>,
    first_row: usize,
) -> CliResult<()> {
    let mut out = String::from("row");
    for name in response_names {
        _ = write!(out, ",{name}");
    }
    out.push('\n');
    for i in 0..predictions.nrows() {
        _ = write!(out, "{}", first_row + i);
        for j in 0..predictions.ncols() {
            _ = write!(out, ",{}", fmt17(predictions[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
