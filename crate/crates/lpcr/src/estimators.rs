//! User-facing estimators: likelihood-based PCR, classical two-stage PCR,
//! OLS, Krylov PLS for a single response, parameter counting, model-order
//! selection, and prediction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{neg_loglik_g, ProfileContext, ProfileEval};
use crate::linalg::{
    orthonormal_basis, pinv_sym, rank_from_eigenvalues, sym_eigen_desc, RANK_TOL,
};
use crate::model::{
    echelon_canonicalize, symmetrize, Dataset, EchelonLoadings, PcrParams, Preprocessing,
};
use crate::optimizer::{minimize_profile, FitResult, OptimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Lpcr,
    ClassicalPcr,
    Ols,
    Pls,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::Lpcr => "lpcr",
            MethodTag::ClassicalPcr => "pcr",
            MethodTag::Ols => "ols",
            MethodTag::Pls => "pls",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
    Loocv,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
            Criterion::Loocv => "loocv",
        }
    }
}

/// A fitted model of order `k` with its information-criterion scores.
#[derive(Debug, Clone)]
pub struct PcrFit {
    pub params: PcrParams,
    pub k: usize,
    /// `n * g_n` at the fitted parameters; NaN when the residual covariance
    /// is singular (interpolating fits).
    pub neg_loglik: f64,
    pub param_count: usize,
    pub ic_aic: f64,
    pub ic_bic: f64,
    pub fit_result: FitResult,
    pub method: MethodTag,
}

#[derive(Debug, Clone)]
pub struct SelectionEntry {
    pub k: usize,
    pub score: f64,
    /// True when the fit at this `k` failed; `score` is then infinite.
    pub failed: bool,
}

/// Model-order scan: one score per `k`, with the argmin (smallest `k` on
/// ties).
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub criterion: Criterion,
    pub table: Vec<SelectionEntry>,
    pub chosen_k: usize,
}

/// Number of free parameters `d(k)` of the model with `k` components.
pub fn param_count(p: usize, r: usize, k: usize) -> Result<usize> {
    if k > p {
        return Err(Error::InvalidParameter(format!("k = {k} out of range for p = {p}")));
    }
    let sigma_params = r * (r + 1) / 2;
    Ok(if k < p {
        sigma_params + k * (r + 1 + p) + 1 - k * (k + 1) / 2
    } else {
        sigma_params + r * k + p * (p + 1) / 2
    })
}

fn ic_scores(n: usize, neg_loglik: f64, d: usize) -> (f64, f64) {
    let d = d as f64;
    (neg_loglik + 2.0 * d, neg_loglik + (n as f64).ln() * d)
}

/// `n * g_n` at parameters assembled from loadings and partial minimizers;
/// NaN when the residual covariance is not invertible.
fn scaled_neg_loglik(params: &PcrParams, data: &Dataset) -> f64 {
    let omega = match nalgebra::Cholesky::new(params.sigma.clone()) {
        Some(chol) => chol.inverse(),
        None => return f64::NAN,
    };
    let omega_x = params.sigma_x.precision();
    match neg_loglik_g(&params.beta, &omega, &omega_x, data) {
        Ok(g) => data.n() as f64 * g,
        Err(_) => f64::NAN,
    }
}

fn assemble_fit(
    data: &Dataset,
    k: usize,
    fit_result: FitResult,
    method: MethodTag,
) -> Result<PcrFit> {
    let eval = &fit_result.eval;
    let params = PcrParams::from_loadings(
        fit_result.loadings.clone(),
        eval.alpha_bar.clone(),
        eval.sigma_bar.clone(),
        eval.tau_bar,
    )?;
    let neg_loglik = scaled_neg_loglik(&params, data);
    let d = param_count(data.p(), data.r(), k)?;
    let (ic_aic, ic_bic) = ic_scores(data.n(), neg_loglik, d);
    Ok(PcrFit { params, k, neg_loglik, param_count: d, ic_aic, ic_bic, fit_result, method })
}

/// Fits the joint model at order `k` by profile-likelihood minimization.
pub fn fit_lpcr(data: &Dataset, k: usize, config: &OptimConfig) -> Result<PcrFit> {
    let fit_result = minimize_profile(data, k, config)?;
    assemble_fit(data, k, fit_result, MethodTag::Lpcr)
}

/// Spectral loadings from the top-`k` eigenpairs of `S_X` with the
/// spiked-model scale; the fallback keeps `tau` positive when the trailing
/// eigenvalue mass vanishes.
fn spectral_loadings(
    eigs: &DVector<f64>,
    vecs: &DMatrix<f64>,
    k: usize,
) -> Result<(EchelonLoadings, f64)> {
    let p = eigs.len();
    if k == 0 {
        let tau = eigs.sum() / p as f64;
        return Ok((EchelonLoadings::empty(p), tau));
    }
    let mut tau = if k < p {
        eigs.iter().skip(k).sum::<f64>() / (p - k) as f64
    } else {
        eigs[p - 1] / 2.0
    };
    if !(tau > eigs[0] * RANK_TOL) {
        tau = eigs[k - 1].max(eigs[0] * RANK_TOL) / 2.0;
    }
    let mut m = DMatrix::zeros(p, k);
    for j in 0..k {
        let d_j = (eigs[j] / tau - 1.0).max(1e-8);
        m.set_column(j, &(vecs.column(j) * d_j.sqrt()));
    }
    Ok((echelon_canonicalize(&m)?, tau))
}

/// Two-stage classical PCR: top-`k` eigenvectors of `S_X`, then least
/// squares of `Y` on the projected predictors; covariance stage from the
/// spiked-model maximizer so all methods report a comparable likelihood.
pub fn fit_classical_pcr(data: &Dataset, k: usize) -> Result<PcrFit> {
    let s_x = data.sample_cov_x();
    let (eigs, vecs) = sym_eigen_desc(&s_x);
    let rank = rank_from_eigenvalues(&eigs, 1e-10);
    if rank < k {
        return Err(Error::ExistenceViolation(format!(
            "S_X has numerical rank {rank} < k = {k}"
        )));
    }
    let (loadings, _) = spectral_loadings(&eigs, &vecs, k)?;
    let eval = ProfileContext::new(data).evaluate(&loadings)?;
    let fit_result = FitResult {
        loadings,
        eval,
        iterations: 0,
        converged: true,
        restart_values: Vec::new(),
    };
    assemble_fit(data, k, fit_result, MethodTag::ClassicalPcr)
}

/// Ordinary least squares `beta = S_X^+ S_XY` with the residual covariance
/// `Y'Q_X Y / n`; reported with the all-predictors convention `k = p`.
pub fn fit_ols(data: &Dataset) -> Result<PcrFit> {
    let (n, p, r) = (data.n(), data.p(), data.r());
    let s_x = data.sample_cov_x();
    let (eigs, vecs) = sym_eigen_desc(&s_x);
    let beta = pinv_sym(&s_x) * data.sample_cov_xy();

    let basis = orthonormal_basis(data.x());
    let qty = basis.transpose() * data.y();
    let mut resid = data.y().transpose() * data.y() - qty.transpose() * &qty;
    symmetrize(&mut resid);
    // exact interpolation leaves pure-noise residuals; project onto the
    // PSD cone so the boundary case stays representable
    let resid = {
        let (vals, vecs) = sym_eigen_desc(&resid);
        let clamped = DVector::from_iterator(r, vals.iter().map(|v| v.max(0.0)));
        let mut m = &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose();
        symmetrize(&mut m);
        m
    };
    let sigma = &resid / n as f64;

    // Spiked representation of S_X on its positive-eigenvalue subspace.
    let rank = rank_from_eigenvalues(&eigs, 1e-10);
    let (loadings, tau) = spectral_loadings(&eigs, &vecs, rank)?;
    let l = loadings.matrix();
    let ltl = l.transpose() * l;
    let alpha = nalgebra::Cholesky::new(ltl)
        .map(|c| c.solve(&(l.transpose() * &beta)))
        .unwrap_or_else(|| pinv_sym(&(l.transpose() * l)) * (l.transpose() * &beta));

    let residual_logdet = {
        let (se, _) = sym_eigen_desc(&resid);
        se.iter().map(|v| v.max(0.0).ln()).sum::<f64>()
    };
    let woodbury = {
        let mut inner = l.transpose() * l;
        for i in 0..inner.nrows() {
            inner[(i, i)] += 1.0;
        }
        inner
    };
    let spike_logdet = crate::linalg::spd_log_det(&woodbury, "I + L'L")?;
    let gram = data.x().transpose() * data.x();
    let chol = nalgebra::Cholesky::new(woodbury).expect("I + L'L is PD");
    let trace_term = gram.trace() - chol.solve(&(l.transpose() * &gram * l)).trace();
    let eval = ProfileEval {
        value: residual_logdet + p as f64 * trace_term.ln(),
        alpha_bar: alpha.clone(),
        sigma_bar: sigma.clone(),
        tau_bar: trace_term / (n as f64 * p as f64),
        residual_logdet,
        trace_term,
        spike_logdet,
    };
    let params = PcrParams::from_loadings(loadings.clone(), alpha, sigma, tau)?;
    let neg_loglik = scaled_neg_loglik(&params, data);
    let d = param_count(p, r, p)?;
    let (ic_aic, ic_bic) = ic_scores(n, neg_loglik, d);
    Ok(PcrFit {
        params,
        k: p,
        neg_loglik,
        param_count: d,
        ic_aic,
        ic_bic,
        fit_result: FitResult {
            loadings,
            eval,
            iterations: 0,
            converged: true,
            restart_values: Vec::new(),
        },
        method: MethodTag::Ols,
    })
}

/// Krylov-subspace PLS for a single response: regression of `Y` on the
/// orthonormalized columns of `[S_XY, S_X S_XY, ..., S_X^{k-1} S_XY]`.
/// Rank-deficient Krylov matrices are reduced to their numerical rank
/// (visible as `fit.k` below the request).
pub fn fit_pls_krylov(data: &Dataset, k: usize) -> Result<PcrFit> {
    if data.r() != 1 {
        return Err(Error::UnsupportedConfiguration(format!(
            "Krylov PLS requires a single response, got r = {}",
            data.r()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("PLS requires k >= 1".into()));
    }
    let p = data.p();
    let s_x = data.sample_cov_x();
    let s_xy = data.sample_cov_xy();
    let mut krylov = DMatrix::zeros(p, k);
    let mut col = s_xy.column(0).into_owned();
    for j in 0..k {
        krylov.set_column(j, &col);
        if j + 1 < k {
            col = &s_x * col;
        }
    }
    let basis = orthonormal_basis(&krylov);
    if basis.ncols() == 0 {
        return Err(Error::DegenerateLoadings(
            "Krylov matrix is numerically zero".into(),
        ));
    }
    let k_eff = basis.ncols();

    // Spiked stage from Rayleigh quotients of the basis directions.
    let rayleigh: Vec<f64> = (0..k_eff)
        .map(|j| (basis.column(j).transpose() * &s_x * basis.column(j))[(0, 0)])
        .collect();
    let mut tau = if k_eff < p {
        (s_x.trace() - rayleigh.iter().sum::<f64>()) / (p - k_eff) as f64
    } else {
        rayleigh.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0
    };
    let scale = s_x.trace().max(f64::MIN_POSITIVE);
    if !(tau > scale * RANK_TOL) {
        tau = scale * RANK_TOL;
    }
    let mut m = DMatrix::zeros(p, k_eff);
    for (j, &lam) in rayleigh.iter().enumerate() {
        let d_j = (lam / tau - 1.0).max(1e-8);
        m.set_column(j, &(basis.column(j) * d_j.sqrt()));
    }
    let loadings = echelon_canonicalize(&m)?;
    let eval = ProfileContext::new(data).evaluate(&loadings)?;
    let fit_result = FitResult {
        loadings,
        eval,
        iterations: 0,
        converged: true,
        restart_values: Vec::new(),
    };
    assemble_fit(data, k_eff, fit_result, MethodTag::Pls)
}

/// Fits the likelihood model for `k = 0..=k_max` and returns the per-`k`
/// results (`Err` entries are selection failures, not fatal).
pub fn lpcr_scan(data: &Dataset, k_max: usize, config: &OptimConfig) -> Result<Vec<Result<PcrFit>>> {
    let s_x = data.sample_cov_x();
    let (eigs, _) = sym_eigen_desc(&s_x);
    let rank = rank_from_eigenvalues(&eigs, 1e-10);
    if k_max + 1 > rank {
        return Err(Error::InvalidParameter(format!(
            "k_max = {k_max} exceeds rank(S_X) - 1 = {}",
            rank.saturating_sub(1)
        )));
    }
    Ok((0..=k_max).map(|k| fit_lpcr(data, k, config)).collect())
}

fn pick_smallest_argmin(table: &[SelectionEntry]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for entry in table {
        if entry.failed {
            continue;
        }
        let better = match best {
            None => true,
            Some((score, _)) => entry.score < score,
        };
        if better {
            best = Some((entry.score, entry.k));
        }
    }
    best.map(|(_, k)| k).ok_or_else(|| {
        Error::ExistenceViolation("every candidate order failed to fit".into())
    })
}

/// Information-criterion scan over `k = 0..=k_max` for the likelihood model.
pub fn select_k_ic(
    data: &Dataset,
    criterion: Criterion,
    k_max: usize,
    config: &OptimConfig,
) -> Result<SelectionReport> {
    if criterion == Criterion::Loocv {
        return Err(Error::InvalidParameter(
            "select_k_ic supports aic and bic; use select_k_loocv for cross-validation".into(),
        ));
    }
    let fits = lpcr_scan(data, k_max, config)?;
    let table: Vec<SelectionEntry> = fits
        .iter()
        .enumerate()
        .map(|(k, fit)| match fit {
            Ok(f) => {
                let score = match criterion {
                    Criterion::Aic => f.ic_aic,
                    Criterion::Bic => f.ic_bic,
                    Criterion::Loocv => unreachable!(),
                };
                let failed = !score.is_finite();
                SelectionEntry { k, score: if failed { f64::INFINITY } else { score }, failed }
            }
            Err(_) => SelectionEntry { k, score: f64::INFINITY, failed: true },
        })
        .collect();
    let chosen_k = pick_smallest_argmin(&table)?;
    Ok(SelectionReport { criterion, table, chosen_k })
}

/// Leave-one-out cross-validation over `k = 0..=k_max` for the moment-based
/// baselines, refitting on every fold.
pub fn select_k_loocv(
    data: &Dataset,
    method: MethodTag,
    k_max: usize,
) -> Result<SelectionReport> {
    let (n, p, r) = (data.n(), data.p(), data.r());
    match method {
        MethodTag::ClassicalPcr => {
            if n < p + 2 {
                return Err(Error::InvalidParameter(format!(
                    "classical PCR cross-validation needs n >= p + 2, got n = {n}, p = {p}"
                )));
            }
        }
        MethodTag::Pls => {
            if r != 1 {
                return Err(Error::UnsupportedConfiguration(
                    "PLS cross-validation requires a single response".into(),
                ));
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "LOOCV selection covers pcr and pls, not {}",
                other.as_str()
            )))
        }
    }

    let mut sums = vec![0.0_f64; k_max + 1];
    let mut failed = vec![false; k_max + 1];
    for i in 0..n {
        let (fold, held_x, held_y) = drop_row(data, i)?;
        for k in 0..=k_max {
            if failed[k] {
                continue;
            }
            let pred = if k == 0 {
                DMatrix::zeros(1, r)
            } else {
                let fit = match method {
                    MethodTag::ClassicalPcr => fit_classical_pcr(&fold, k),
                    MethodTag::Pls => fit_pls_krylov(&fold, k),
                    _ => unreachable!(),
                };
                match fit {
                    Ok(f) => &held_x * &f.params.beta,
                    Err(_) => {
                        failed[k] = true;
                        continue;
                    }
                }
            };
            sums[k] += (&held_y - pred).norm_squared();
        }
    }
    let table: Vec<SelectionEntry> = (0..=k_max)
        .map(|k| SelectionEntry {
            k,
            score: if failed[k] { f64::INFINITY } else { sums[k] / (n as f64 * r as f64) },
            failed: failed[k],
        })
        .collect();
    let chosen_k = pick_smallest_argmin(&table)?;
    Ok(SelectionReport { criterion: Criterion::Loocv, table, chosen_k })
}

fn drop_row(data: &Dataset, i: usize) -> Result<(Dataset, DMatrix<f64>, DMatrix<f64>)> {
    let (n, p, r) = (data.n(), data.p(), data.r());
    let mut y = DMatrix::zeros(n - 1, r);
    let mut x = DMatrix::zeros(n - 1, p);
    let mut dst = 0;
    for row in 0..n {
        if row == i {
            continue;
        }
        y.set_row(dst, &data.y().row(row));
        x.set_row(dst, &data.x().row(row));
        dst += 1;
    }
    let held_x = DMatrix::from_row_slice(1, p, data.x().row(i).transpose().as_slice());
    let held_y = DMatrix::from_row_slice(1, r, data.y().row(i).transpose().as_slice());
    Ok((Dataset::new(y, x)?, held_x, held_y))
}

/// Applies stored training statistics to new raw predictors and returns
/// predictions on the original response scale.
pub fn predict_with(
    beta: &DMatrix<f64>,
    preprocessing: Option<&Preprocessing>,
    x_new: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if x_new.ncols() != beta.nrows() {
        return Err(Error::InvalidParameter(format!(
            "new predictors have {} columns, coefficient expects {}",
            x_new.ncols(),
            beta.nrows()
        )));
    }
    match preprocessing {
        None => Ok(x_new * beta),
        Some(prep) => {
            let x_std = prep.transform_x(x_new)?;
            let mut preds = x_std * beta;
            for j in 0..preds.ncols() {
                preds.column_mut(j).add_scalar_mut(prep.y_mean[j]);
            }
            Ok(preds)
        }
    }
}

/// Predicts responses for new predictor rows with a fitted model.
pub fn predict(
    fit: &PcrFit,
    x_new: &DMatrix<f64>,
    preprocessing: Option<&Preprocessing>,
) -> Result<DMatrix<f64>> {
    predict_with(&fit.params.beta, preprocessing, x_new)
}
