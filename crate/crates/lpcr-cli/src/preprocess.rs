//! Train/test splitting with training-statistics standardization: the
//! response is centered by training means, predictors are centered and
//! scaled by training means and sample standard deviations.

use nalgebra::{DMatrix, DVector};

use lpcr::{Dataset, Error, Preprocessing};

use crate::io::{CliError, CliResult, NumericTable};

pub struct SplitData {
    pub train: Dataset,
    /// Standardized with the training statistics; carries no metadata
    /// because its columns are not mean zero.
    pub test: Dataset,
    pub response_cols: Vec<String>,
    pub predictor_cols: Vec<String>,
}

/// Resolves `--response-cols` tokens (names or 0-based indices) against the
/// header row.
pub fn resolve_response_cols(spec: &str, headers: &[String]) -> CliResult<Vec<usize>> {
    let mut cols = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let idx = if let Ok(i) = token.parse::<usize>() {
            if i >= headers.len() {
                return Err(CliError::config(format!(
                    "response column index {i} out of range (file has {} columns)",
                    headers.len()
                )));
            }
            i
        } else {
            headers.iter().position(|h| h == token).ok_or_else(|| {
                CliError::config(format!("response column {token:?} not found in the header"))
            })?
        };
        if cols.contains(&idx) {
            return Err(CliError::config(format!("response column {token:?} listed twice")));
        }
        cols.push(idx);
    }
    if cols.is_empty() {
        return Err(CliError::config("no response columns given"));
    }
    Ok(cols)
}

/// Splits rows at `split_index` and standardizes both partitions with the
/// training statistics only.
pub fn preprocess_split(
    table: &NumericTable,
    response_idx: &[usize],
    split_index: usize,
) -> CliResult<SplitData> {
    let n = table.values.nrows();
    if split_index < 2 {
        return Err(CliError::config("split index must be at least 2"));
    }
    if split_index >= n {
        return Err(CliError::config(format!(
            "split index {split_index} must be below the number of data rows ({n})"
        )));
    }
    let predictor_idx: Vec<usize> =
        (0..table.headers.len()).filter(|j| !response_idx.contains(j)).collect();
    if predictor_idx.is_empty() {
        return Err(CliError::config("no predictor columns remain"));
    }
    let r = response_idx.len();
    let p = predictor_idx.len();

    let column = |j: usize| table.values.column(j);
    let train_mean = |j: usize| column(j).rows(0, split_index).mean();
    let y_mean = DVector::from_iterator(r, response_idx.iter().map(|&j| train_mean(j)));
    let x_mean = DVector::from_iterator(p, predictor_idx.iter().map(|&j| train_mean(j)));
    let mut x_std = DVector::zeros(p);
    for (out_j, &j) in predictor_idx.iter().enumerate() {
        let col = column(j).rows(0, split_index).into_owned();
        let mean = x_mean[out_j];
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std = (ss / (split_index - 1) as f64).sqrt();
        let scale = col.iter().fold(mean.abs(), |acc, v| acc.max(v.abs()));
        if std <= scale * 1e-12 {
            return Err(Error::ConstantColumn {
                name: table.headers[j].clone(),
                index: j,
            }
            .into());
        }
        x_std[out_j] = std;
    }

    let build = |rows: std::ops::Range<usize>| -> (DMatrix<f64>, DMatrix<f64>) {
        let len = rows.len();
        let y = DMatrix::from_fn(len, r, |i, jj| {
            table.values[(rows.start + i, response_idx[jj])] - y_mean[jj]
        });
        let x = DMatrix::from_fn(len, p, |i, jj| {
            (table.values[(rows.start + i, predictor_idx[jj])] - x_mean[jj]) / x_std[jj]
        });
        (y, x)
    };
    let (y_train, x_train) = build(0..split_index);
    let (y_test, x_test) = build(split_index..n);

    let prep = Preprocessing { y_mean, x_mean, x_std };
    let train = Dataset::with_preprocessing(y_train, x_train, prep).map_err(CliError::from)?;
    let test = Dataset::new(y_test, x_test).map_err(CliError::from)?;
    Ok(SplitData {
        train,
        test,
        response_cols: response_idx.iter().map(|&j| table.headers[j].clone()).collect(),
        predictor_cols: predictor_idx.iter().map(|&j| table.headers[j].clone()).collect(),
    })
}
