//! Browser demo: simulate from the spiked-covariance regression model and
//! compare the likelihood-based fit against classical PCR and OLS
//! interactively. Every export takes plain numbers and returns a JSON
//! string for the host page to plot.

use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use lpcr::estimators::{fit_classical_pcr, fit_lpcr, fit_ols, lpcr_scan};
use lpcr::linalg::{max_principal_angle, orthonormal_basis, sym_eigen_desc};
use lpcr::model::spiked_eigen;
use lpcr::simulation::{
    estimation_rmse, gen_dataset, gen_true_params, prediction_rmse, run_experiment, Axis,
    ExperimentConfig, GenMode, MethodSpec, SimGrid, SimSettings,
};
use lpcr::{Criterion, OptimConfig, TrueParams};

fn json_error(message: impl std::fmt::Display) -> String {
    #[derive(Serialize)]
    struct ErrorDoc {
        error: String,
    }
    serde_json::to_string(&ErrorDoc { error: message.to_string() }).unwrap()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(json_error)
}

fn demo_truth(
    p: usize,
    k_star: usize,
    d_star: f64,
    coef_norm: f64,
    seed: u64,
) -> Result<TrueParams, lpcr::Error> {
    gen_true_params(p, k_star, 1, d_star, 1.0, coef_norm, &DMatrix::identity(1, 1), seed)
}

#[derive(Serialize)]
struct MethodMetrics {
    est_rmse: f64,
    pred_rmse: f64,
    subspace_angle_deg: Option<f64>,
    beta: Vec<f64>,
}

#[derive(Serialize)]
struct FitDemo {
    true_spectrum: Vec<f64>,
    sample_spectrum: Vec<f64>,
    fitted_spectrum: Vec<f64>,
    tau_true: f64,
    tau_hat: f64,
    converged: bool,
    iterations: usize,
    beta_true: Vec<f64>,
    lpcr: MethodMetrics,
    pcr: MethodMetrics,
    ols: MethodMetrics,
}

/// Simulate one train/test pair and fit the three estimators at `k_fit`.
#[wasm_bindgen]
pub fn fit_demo(
    n: u32,
    p: u32,
    k_star: u32,
    d_star: f64,
    coef_norm: f64,
    k_fit: u32,
    seed: u32,
) -> String {
    match fit_demo_inner(
        n as usize,
        p as usize,
        k_star as usize,
        d_star,
        coef_norm,
        k_fit as usize,
        seed as u64,
    ) {
        Ok(body) => body,
        Err(e) => json_error(e),
    }
}

fn fit_demo_inner(
    n: usize,
    p: usize,
    k_star: usize,
    d_star: f64,
    coef_norm: f64,
    k_fit: usize,
    seed: u64,
) -> Result<String, lpcr::Error> {
    let truth = demo_truth(p, k_star, d_star, coef_norm, seed)?;
    let train = gen_dataset(&truth, n, seed.wrapping_add(1), GenMode::Gaussian)?;
    let test = gen_dataset(&truth, n, seed.wrapping_add(2), GenMode::Gaussian)?;

    let (true_spectrum, _) = sym_eigen_desc(truth.sigma_x_star());
    let (sample_spectrum, _) = sym_eigen_desc(&train.sample_cov_x());

    let config = OptimConfig { seed, ..OptimConfig::default() };
    let lp = fit_lpcr(&train, k_fit, &config)?;
    let cp = fit_classical_pcr(&train, k_fit)?;
    let ols = fit_ols(&train)?;

    let (fitted_spectrum, _) = sym_eigen_desc(&lp.params.sigma_x.assemble());
    let u_true = truth.u_star();
    let angle = |fit: &lpcr::PcrFit| -> Option<f64> {
        if k_star == 0 || fit.params.sigma_x.k() == 0 {
            return None;
        }
        let (u, _, _) = spiked_eigen(&fit.params.sigma_x);
        let cols = u.ncols().min(u_true.ncols());
        let basis = orthonormal_basis(&u.columns(0, cols).into_owned());
        Some(max_principal_angle(&basis, u_true).to_degrees())
    };
    let metrics = |fit: &lpcr::PcrFit| -> Result<MethodMetrics, lpcr::Error> {
        Ok(MethodMetrics {
            est_rmse: estimation_rmse(&fit.params.beta, truth.beta_star())?,
            pred_rmse: prediction_rmse(&fit.params.beta, &test)?,
            subspace_angle_deg: angle(fit),
            beta: fit.params.beta.column(0).iter().copied().collect(),
        })
    };

    let doc = FitDemo {
        true_spectrum: true_spectrum.iter().copied().collect(),
        sample_spectrum: sample_spectrum.iter().copied().collect(),
        fitted_spectrum: fitted_spectrum.iter().copied().collect(),
        tau_true: truth.tau_star(),
        tau_hat: lp.params.sigma_x.tau(),
        converged: lp.fit_result.converged,
        iterations: lp.fit_result.iterations,
        beta_true: truth.beta_star().column(0).iter().copied().collect(),
        lpcr: metrics(&lp)?,
        pcr: metrics(&cp)?,
        ols: metrics(&ols)?,
    };
    Ok(to_json(&doc))
}

#[derive(Serialize)]
struct IcScanDemo {
    ks: Vec<usize>,
    aic: Vec<Option<f64>>,
    bic: Vec<Option<f64>>,
    neg_loglik: Vec<Option<f64>>,
    chosen_aic: usize,
    chosen_bic: usize,
    k_star: usize,
}

/// Information-criterion scan over candidate orders on one simulated draw.
#[wasm_bindgen]
pub fn ic_scan_demo(
    n: u32,
    p: u32,
    k_star: u32,
    d_star: f64,
    coef_norm: f64,
    k_max: u32,
    seed: u32,
) -> String {
    match ic_scan_inner(
        n as usize,
        p as usize,
        k_star as usize,
        d_star,
        coef_norm,
        k_max as usize,
        seed as u64,
    ) {
        Ok(body) => body,
        Err(e) => json_error(e),
    }
}

fn ic_scan_inner(
    n: usize,
    p: usize,
    k_star: usize,
    d_star: f64,
    coef_norm: f64,
    k_max: usize,
    seed: u64,
) -> Result<String, lpcr::Error> {
    let truth = demo_truth(p, k_star, d_star, coef_norm, seed)?;
    let train = gen_dataset(&truth, n, seed.wrapping_add(1), GenMode::Gaussian)?;
    let config = OptimConfig { seed, ..OptimConfig::default() };
    let fits = lpcr_scan(&train, k_max, &config)?;

    let mut doc = IcScanDemo {
        ks: (0..=k_max).collect(),
        aic: Vec::new(),
        bic: Vec::new(),
        neg_loglik: Vec::new(),
        chosen_aic: 0,
        chosen_bic: 0,
        k_star,
    };
    let mut best_aic = f64::INFINITY;
    let mut best_bic = f64::INFINITY;
    for (k, fit) in fits.iter().enumerate() {
        match fit {
            Ok(f) => {
                doc.aic.push(f.ic_aic.is_finite().then_some(f.ic_aic));
                doc.bic.push(f.ic_bic.is_finite().then_some(f.ic_bic));
                doc.neg_loglik.push(f.neg_loglik.is_finite().then_some(f.neg_loglik));
                if f.ic_aic < best_aic {
                    best_aic = f.ic_aic;
                    doc.chosen_aic = k;
                }
                if f.ic_bic < best_bic {
                    best_bic = f.ic_bic;
                    doc.chosen_bic = k;
                }
            }
            Err(_) => {
                doc.aic.push(None);
                doc.bic.push(None);
                doc.neg_loglik.push(None);
            }
        }
    }
    Ok(to_json(&doc))
}

#[derive(Serialize)]
struct CurveSeries {
    method: String,
    selector: String,
    means: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct CurveDemo {
    axis: String,
    values: Vec<f64>,
    metric: String,
    series: Vec<CurveSeries>,
}

/// Small Monte Carlo sweep of relative estimation RMSE along one axis.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn rmse_curve_demo(
    axis: &str,
    values_csv: &str,
    reps: u32,
    n: u32,
    p: u32,
    k_star: u32,
    d_star: f64,
    seed: u32,
) -> String {
    match curve_inner(
        axis,
        values_csv,
        reps as usize,
        n as usize,
        p as usize,
        k_star as usize,
        d_star,
        seed as u64,
    ) {
        Ok(body) => body,
        Err(e) => json_error(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn curve_inner(
    axis: &str,
    values_csv: &str,
    reps: usize,
    n: usize,
    p: usize,
    k_star: usize,
    d_star: f64,
    seed: u64,
) -> Result<String, lpcr::Error> {
    let axis: Axis = axis.parse()?;
    let values: Vec<f64> = values_csv
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| lpcr::Error::InvalidParameter(format!("bad axis value {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let base = SimSettings {
        n,
        p,
        k_star,
        r: 1,
        d_star,
        sigma_scale: 1.0,
        ..SimSettings::default()
    };
    let grid = SimGrid {
        base,
        axis,
        values,
        replications: reps.clamp(1, 50),
        seed,
        mode: GenMode::Gaussian,
    };
    let methods = [
        MethodSpec::Lpcr(Criterion::Bic),
        MethodSpec::ClassicalPcrLoocv,
        MethodSpec::Ols,
    ];
    let result = run_experiment(&grid, &methods, &ExperimentConfig::default())?;

    let mut series: Vec<CurveSeries> = methods
        .iter()
        .map(|m| CurveSeries {
            method: m.method_label().to_string(),
            selector: m.selector_label().to_string(),
            means: Vec::new(),
        })
        .collect();
    for &value in &result.axis_values {
        for (mi, m) in methods.iter().enumerate() {
            let cell = result.summary.iter().find(|c| {
                c.axis_value == value
                    && c.method == m.method_label()
                    && c.selector == m.selector_label()
                    && c.metric == "est_rmse_rel"
            });
            series[mi]
                .means
                .push(cell.and_then(|c| c.mean.is_finite().then_some(c.mean)));
        }
    }
    Ok(to_json(&CurveDemo {
        axis: axis.as_str().to_string(),
        values: result.axis_values.clone(),
        metric: "est_rmse_rel".to_string(),
        series,
    }))
}
