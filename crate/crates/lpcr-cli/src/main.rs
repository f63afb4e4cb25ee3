//! `lpcr` — fit, model-order selection, prediction, and simulation studies
//! for likelihood-based principal components regression on CSV data.

mod io;
mod preprocess;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use lpcr::estimators::{
    fit_classical_pcr, fit_lpcr, fit_ols, fit_pls_krylov, predict_with, select_k_ic,
    select_k_loocv, Criterion, MethodTag, PcrFit,
};
use lpcr::likelihood::ObjectiveVariant;
use lpcr::simulation::{
    run_experiment, Axis, ExperimentConfig, GenMode, MethodSpec, SimGrid, SimSettings,
};
use lpcr::{OptimConfig, Preprocessing};

use io::{
    matrix_to_rows, read_numeric_csv, rows_to_matrix, write_json, write_predictions_csv, CliError,
    CliResult, FitArtifact, MetricsArtifact, OptimizerArtifact, PredictArtifact,
    PreprocessingArtifact, SelectionArtifact, SelectionRow,
};
use preprocess::{preprocess_split, resolve_response_cols};

#[derive(Parser)]
#[command(name = "lpcr", version, about = "Principal components regression by joint likelihood maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lpcr,
    Pcr,
    Pls,
    Ols,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
    Loocv,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(name = "as-displayed")]
    AsDisplayed,
    #[value(name = "full-profile")]
    FullProfile,
}

impl VariantArg {
    fn to_variant(self) -> ObjectiveVariant {
        match self {
            VariantArg::AsDisplayed => ObjectiveVariant::AsDisplayed,
            VariantArg::FullProfile => ObjectiveVariant::FullProfile,
        }
    }
}

#[derive(Args)]
struct OptimArgs {
    /// Optimizer seed (multistart perturbations)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Profile objective variant
    #[arg(long, value_enum, default_value = "full-profile")]
    objective_variant: VariantArg,
    /// Number of optimizer starts
    #[arg(long)]
    restarts: Option<usize>,
    /// Masked-gradient max-norm tolerance
    #[arg(long)]
    gradient_tolerance: Option<f64>,
    /// Iteration cap per start
    #[arg(long)]
    max_iterations: Option<usize>,
}

impl OptimArgs {
    fn to_config(&self) -> OptimConfig {
        let mut config = OptimConfig {
            seed: self.seed,
            objective_variant: self.objective_variant.to_variant(),
            ..OptimConfig::default()
        };
        if let Some(r) = self.restarts {
            config.restarts = r;
        }
        if let Some(g) = self.gradient_tolerance {
            config.gradient_tolerance = g;
        }
        if let Some(m) = self.max_iterations {
            config.max_iterations = m;
        }
        config
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model on the training rows and predict the test rows
    Fit {
        /// Input CSV (header row, numeric cells)
        #[arg(long)]
        input: PathBuf,
        /// Response columns: names or 0-based indices, comma separated
        #[arg(long)]
        response_cols: String,
        /// Number of leading rows used for training
        #[arg(long)]
        split_index: usize,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Component count (ignored for ols)
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Scan component counts on the training rows and report the best
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        response_cols: String,
        #[arg(long)]
        split_index: usize,
        /// lpcr (aic/bic) or pcr/pls (loocv)
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum)]
        criterion: CriterionArg,
        #[arg(long)]
        k_max: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Predict new rows with a stored fit.json
    Predict {
        /// fit.json from a previous fit run
        #[arg(long)]
        fit: PathBuf,
        /// CSV whose header contains the fit's predictor columns
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Monte Carlo sweep over one design axis
    Simulate {
        /// Swept axis: coef_norm, d_star, p, k, or n
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values
        #[arg(long)]
        axis_values: String,
        /// Replications per axis value
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// method[:selector] list, e.g. lpcr:bic,pcr:loocv,ols
        #[arg(long, default_value = "lpcr:bic,lpcr:aic,pcr:loocv,ols")]
        methods: String,
        #[arg(long, value_enum, default_value = "gaussian")]
        mode: ModeArg,
        /// Selection cap (default: min(p-1, 2k*+2))
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Base-design overrides (defaults: n=120 p=40 k=4 r=2 d*=3
        /// tau*=1 coef-norm=2 sigma-scale=2)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        d_star: Option<f64>,
        #[arg(long)]
        tau_star: Option<f64>,
        #[arg(long)]
        coef_norm: Option<f64>,
        #[arg(long)]
        sigma_scale: Option<f64>,
        #[arg(long, value_enum, default_value = "full-profile")]
        objective_variant: VariantArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gaussian,
    Latent,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.exit_code as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Fit { input, response_cols, split_index, method, k, out_dir, optim } => {
            cmd_fit(&input, &response_cols, split_index, method, k, &out_dir, &optim)
        }
        Command::Select {
            input,
            response_cols,
            split_index,
            method,
            criterion,
            k_max,
            out_dir,
            optim,
        } => cmd_select(&input, &response_cols, split_index, method, criterion, k_max, &out_dir, &optim),
        Command::Predict { fit, input, out_dir } => cmd_predict(&fit, &input, &out_dir),
        Command::Simulate {
            axis,
            axis_values,
            reps,
            seed,
            methods,
            mode,
            k_max,
            out_dir,
            n,
            p,
            k,
            r,
            d_star,
            tau_star,
            coef_norm,
            sigma_scale,
            objective_variant,
        } => {
            let mut base = SimSettings::default();
            if let Some(v) = n {
                base.n = v;
            }
            if let Some(v) = p {
                base.p = v;
            }
            if let Some(v) = k {
                base.k_star = v;
            }
            if let Some(v) = r {
                base.r = v;
            }
            if let Some(v) = d_star {
                base.d_star = v;
            }
            if let Some(v) = tau_star {
                base.tau_star = v;
            }
            if let Some(v) = coef_norm {
                base.coef_norm = v;
            }
            if let Some(v) = sigma_scale {
                base.sigma_scale = v;
            }
            cmd_simulate(
                &axis,
                &axis_values,
                reps,
                seed,
                &methods,
                mode,
                k_max,
                &out_dir,
                base,
                objective_variant.to_variant(),
            )
        }
    }
}

fn ensure_out_dir(out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    input: &Path,
    response_cols: &str,
    split_index: usize,
    method: MethodArg,
    k: Option<usize>,
    out_dir: &Path,
    optim: &OptimArgs,
) -> CliResult<ExitCode> {
    ensure_out_dir(out_dir)?;
    let table = read_numeric_csv(input)?;
    let response_idx = resolve_response_cols(response_cols, &table.headers)?;
    let split = preprocess_split(&table, &response_idx, split_index)?;
    let config = optim.to_config();

    let (fit, method_name): (PcrFit, &str) = match method {
        MethodArg::Lpcr => {
            let k = k.ok_or_else(|| CliError::config("--k is required for lpcr"))?;
            (fit_lpcr(&split.train, k, &config)?, "lpcr")
        }
        MethodArg::Pcr => {
            let k = k.ok_or_else(|| CliError::config("--k is required for pcr"))?;
            (fit_classical_pcr(&split.train, k)?, "pcr")
        }
        MethodArg::Pls => {
            let k = k.ok_or_else(|| CliError::config("--k is required for pls"))?;
            (fit_pls_krylov(&split.train, k)?, "pls")
        }
        MethodArg::Ols => (fit_ols(&split.train)?, "ols"),
    };
    if matches!(method, MethodArg::Pls) && Some(fit.k) != k {
        eprintln!(
            "warning: Krylov matrix was rank deficient; using k = {} instead of {}",
            fit.k,
            k.unwrap_or(0)
        );
    }

    let prep = split.train.preprocessing().expect("training data carries statistics");
    let artifact = FitArtifact {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        method: method_name.to_string(),
        objective_variant: config.objective_variant.as_str().to_string(),
        k: fit.k,
        param_count: fit.param_count,
        n_train: split.train.n(),
        p: split.train.p(),
        r: split.train.r(),
        neg_loglik: fit.neg_loglik,
        ic_aic: fit.ic_aic,
        ic_bic: fit.ic_bic,
        tau: fit.params.sigma_x.tau(),
        beta: matrix_to_rows(&fit.params.beta),
        sigma: matrix_to_rows(&fit.params.sigma),
        loadings: matrix_to_rows(fit.params.sigma_x.loadings().matrix()),
        optimizer: OptimizerArtifact {
            iterations: fit.fit_result.iterations,
            converged: fit.fit_result.converged,
            restart_values: fit.fit_result.restart_values.clone(),
            gradient_tolerance: config.gradient_tolerance,
            step_tolerance: config.step_tolerance,
            max_iterations: config.max_iterations,
            restarts: config.restarts,
        },
        preprocessing: PreprocessingArtifact {
            response_cols: split.response_cols.clone(),
            predictor_cols: split.predictor_cols.clone(),
            split_index,
            y_mean: prep.y_mean.iter().copied().collect(),
            x_mean: prep.x_mean.iter().copied().collect(),
            x_std: prep.x_std.iter().copied().collect(),
        },
    };
    write_json(&out_dir.join("fit.json"), &artifact)?;

    // predictions on the original response scale
    let y_mean = prep.y_mean.clone();
    let centered = split.test.x() * &fit.params.beta;
    let mut preds_raw = centered.clone();
    for j in 0..preds_raw.ncols() {
        preds_raw.column_mut(j).add_scalar_mut(y_mean[j]);
    }
    write_predictions_csv(
        &out_dir.join("predictions.csv"),
        &split.response_cols,
        &preds_raw,
        split_index,
    )?;

    let n_test = split.test.n();
    let rn = (split.test.r() * n_test) as f64;
    let test_rmse = (&centered - split.test.y()).norm() / rn.sqrt();
    let baseline_rmse = split.test.y().norm() / rn.sqrt();
    let metrics = MetricsArtifact {
        n_test,
        test_rmse,
        baseline_rmse,
        relative_rmse: test_rmse / baseline_rmse,
    };
    write_json(&out_dir.join("metrics.json"), &metrics)?;

    if !fit.fit_result.converged {
        eprintln!("warning: optimizer did not meet the gradient tolerance; artifacts written");
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    input: &Path,
    response_cols: &str,
    split_index: usize,
    method: MethodArg,
    criterion: CriterionArg,
    k_max: usize,
    out_dir: &Path,
    optim: &OptimArgs,
) -> CliResult<ExitCode> {
    ensure_out_dir(out_dir)?;
    let table = read_numeric_csv(input)?;
    let response_idx = resolve_response_cols(response_cols, &table.headers)?;
    let split = preprocess_split(&table, &response_idx, split_index)?;
    let config = optim.to_config();

    let (report, method_name) = match (method, criterion) {
        (MethodArg::Lpcr, CriterionArg::Aic) => {
            (select_k_ic(&split.train, Criterion::Aic, k_max, &config)?, "lpcr")
        }
        (MethodArg::Lpcr, CriterionArg::Bic) => {
            (select_k_ic(&split.train, Criterion::Bic, k_max, &config)?, "lpcr")
        }
        (MethodArg::Pcr, CriterionArg::Loocv) => {
            (select_k_loocv(&split.train, MethodTag::ClassicalPcr, k_max)?, "pcr")
        }
        (MethodArg::Pls, CriterionArg::Loocv) => {
            (select_k_loocv(&split.train, MethodTag::Pls, k_max)?, "pls")
        }
        _ => {
            return Err(CliError::config(
                "supported pairs: lpcr with aic/bic, pcr or pls with loocv",
            ))
        }
    };
    let artifact = SelectionArtifact {
        version: env!("CARGO_PKG_VERSION").to_string(),
        method: method_name.to_string(),
        criterion: report.criterion.as_str().to_string(),
        k_max,
        seed: config.seed,
        table: report
            .table
            .iter()
            .map(|e| SelectionRow { k: e.k, score: e.score, failed: e.failed })
            .collect(),
        chosen_k: report.chosen_k,
    };
    write_json(&out_dir.join("selection.json"), &artifact)?;
    println!("chosen k = {}", report.chosen_k);
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(fit_path: &Path, input: &Path, out_dir: &Path) -> CliResult<ExitCode> {
    ensure_out_dir(out_dir)?;
    let body = std::fs::read_to_string(fit_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", fit_path.display())))?;
    let artifact: PredictArtifact = serde_json::from_str(&body)
        .map_err(|e| CliError::config(format!("{} is not a fit artifact: {e}", fit_path.display())))?;
    let beta = rows_to_matrix(&artifact.beta)?;
    let prep = Preprocessing {
        y_mean: DVector::from_vec(artifact.preprocessing.y_mean.clone()),
        x_mean: DVector::from_vec(artifact.preprocessing.x_mean.clone()),
        x_std: DVector::from_vec(artifact.preprocessing.x_std.clone()),
    };
    if beta.nrows() != prep.x_mean.len() || beta.ncols() != prep.y_mean.len() {
        return Err(CliError::config("fit artifact is internally inconsistent"));
    }

    let table = read_numeric_csv(input)?;
    // pick the fit's predictor columns by name
    let mut idx = Vec::with_capacity(artifact.preprocessing.predictor_cols.len());
    for name in &artifact.preprocessing.predictor_cols {
        let j = table.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::config(format!("input is missing predictor column {name:?}"))
        })?;
        idx.push(j);
    }
    let x_raw = DMatrix::from_fn(table.values.nrows(), idx.len(), |i, jj| {
        table.values[(i, idx[jj])]
    });
    let preds = predict_with(&beta, Some(&prep), &x_raw)?;
    write_predictions_csv(
        &out_dir.join("predictions.csv"),
        &artifact.preprocessing.response_cols,
        &preds,
        0,
    )?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    axis: &str,
    axis_values: &str,
    reps: usize,
    seed: u64,
    methods: &str,
    mode: ModeArg,
    k_max: Option<usize>,
    out_dir: &Path,
    base: SimSettings,
    variant: ObjectiveVariant,
) -> CliResult<ExitCode> {
    ensure_out_dir(out_dir)?;
    let axis: Axis = axis.parse()?;
    let values: Vec<f64> = axis_values
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad axis value {t:?}")))
        })
        .collect::<CliResult<_>>()?;
    let specs: Vec<MethodSpec> = methods
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<MethodSpec>().map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let grid = SimGrid {
        base,
        axis,
        values,
        replications: reps,
        seed,
        mode: match mode {
            ModeArg::Gaussian => GenMode::Gaussian,
            ModeArg::Latent => GenMode::Latent,
        },
    };
    let config = ExperimentConfig {
        k_max,
        optim: OptimConfig { objective_variant: variant, ..OptimConfig::default() },
    };
    let result = run_experiment(&grid, &specs, &config)?;
    std::fs::write(out_dir.join("experiment.csv"), result.to_csv_string())?;
    let mut summary = result.to_json_string();
    summary.push('\n');
    std::fs::write(out_dir.join("summary.json"), summary)?;
    Ok(ExitCode::SUCCESS)
}
