//! Numerical minimization of the profile objective over lower-echelon
//! loadings: spectral initialization, masked limited-memory quasi-Newton
//! descent with backtracking line search, and seeded multistart.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::likelihood::{ObjectiveVariant, ProfileContext, ProfileEval};
use crate::linalg::{rank_from_eigenvalues, sym_eigen_desc};
use crate::model::{echelon_canonicalize, Dataset, EchelonLoadings};

/// Existence-check rank threshold, relative to the largest eigenvalue.
const EXISTENCE_RANK_TOL: f64 = 1e-10;
/// Sufficient-decrease constant for the backtracking line search.
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: u32 = 60;
/// Consecutive decreasing-and-growing iterations that signal divergence.
const DIVERGENCE_RUN: usize = 100;

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub max_iterations: usize,
    /// Max-norm tolerance on the masked gradient.
    pub gradient_tolerance: f64,
    /// Relative objective-change tolerance.
    pub step_tolerance: f64,
    /// Total number of starts (the spectral initializer plus perturbations).
    pub restarts: usize,
    pub seed: u64,
    pub objective_variant: ObjectiveVariant,
    /// Quasi-Newton history length.
    pub memory: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-7,
            step_tolerance: 1e-10,
            restarts: 3,
            seed: 0,
            objective_variant: ObjectiveVariant::default(),
            memory: 10,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gradient_tolerance <= 0.0 || self.step_tolerance <= 0.0 {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        if self.memory == 0 {
            return Err(Error::InvalidParameter("quasi-Newton memory must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a profile minimization.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Canonicalized loadings at the best point found.
    pub loadings: EchelonLoadings,
    /// Profile evaluation at the optimum.
    pub eval: ProfileEval,
    /// Accepted iterations of the winning start.
    pub iterations: usize,
    /// True only when the masked gradient max-norm met `gradient_tolerance`.
    pub converged: bool,
    /// Final objective value per start.
    pub restart_values: Vec<f64>,
}

/// Verifies the existence conditions for the minimizer at this `k`:
/// `rank(S_X) > k` (`= p` when `k = p`) and `Y'Q_X Y` invertible.
pub fn existence_check(data: &Dataset, k: usize) -> Result<()> {
    let p = data.p();
    if k > p {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds p = {p}")));
    }
    let s_x = data.sample_cov_x();
    let (eigs, _) = sym_eigen_desc(&s_x);
    let rank = rank_from_eigenvalues(&eigs, EXISTENCE_RANK_TOL);
    if (k < p && rank <= k) || (k == p && rank < p) {
        return Err(Error::ExistenceViolation(format!(
            "S_X has numerical rank {rank}, need rank > k = {k} (rank = p for k = p)"
        )));
    }
    let basis = crate::linalg::orthonormal_basis(data.x());
    let qty = basis.transpose() * data.y();
    let mut resid = data.y().transpose() * data.y() - qty.transpose() * &qty;
    crate::model::symmetrize(&mut resid);
    let (resid_eigs, _) = sym_eigen_desc(&resid);
    let max = resid_eigs[0].max(f64::MIN_POSITIVE);
    let min = resid_eigs[resid_eigs.len() - 1];
    if !(min > max * EXISTENCE_RANK_TOL) {
        return Err(Error::ExistenceViolation(
            "Y'Q_X Y is numerically singular".into(),
        ));
    }
    Ok(())
}

/// Spectral initializer: eigenvectors of `S_X` scaled by the spiked-model
/// maximizer of the predictor likelihood, reduced to echelon form.
///
/// `tau0` is the mean of the `p - k` trailing eigenvalues and
/// `d_j = max(lambda_j / tau0 - 1, 1e-8)`. At `k = p` there are no trailing
/// eigenvalues; `tau0 = lambda_min / 2` is used, which reproduces `S_X`
/// exactly.
pub fn init_from_pca(data: &Dataset, k: usize) -> Result<EchelonLoadings> {
    let p = data.p();
    if k > p {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds p = {p}")));
    }
    let s_x = data.sample_cov_x();
    let (eigs, vecs) = sym_eigen_desc(&s_x);
    let rank = rank_from_eigenvalues(&eigs, EXISTENCE_RANK_TOL);
    if (k < p && rank <= k) || (k == p && rank < p) {
        return Err(Error::ExistenceViolation(format!(
            "S_X has numerical rank {rank} <= k = {k}"
        )));
    }
    if k == 0 {
        return Ok(EchelonLoadings::empty(p));
    }
    let tau0 = if k < p {
        eigs.iter().skip(k).sum::<f64>() / (p - k) as f64
    } else {
        eigs[p - 1] / 2.0
    };
    let mut m = DMatrix::zeros(p, k);
    for j in 0..k {
        let d_j = (eigs[j] / tau0 - 1.0).max(1e-8);
        m.set_column(j, &(vecs.column(j) * d_j.sqrt()));
    }
    echelon_canonicalize(&m)
}

/// Minimizes the profile objective over `p x k` echelon loadings.
///
/// Deterministic given `(data, k, config)`: the spectral start plus
/// `restarts - 1` seeded Gaussian perturbations, reduced by exact objective
/// comparison with smallest-start-index tie-break.
pub fn minimize_profile(data: &Dataset, k: usize, config: &OptimConfig) -> Result<FitResult> {
    config.validate()?;
    existence_check(data, k)?;
    let ctx = ProfileContext::new(data);
    let init = init_from_pca(data, k)?;

    if k == 0 {
        let eval = ctx.evaluate(&init)?;
        let value = eval.objective(config.objective_variant);
        return Ok(FitResult {
            loadings: init,
            eval,
            iterations: 0,
            converged: true,
            restart_values: vec![value],
        });
    }

    let mut restart_values = Vec::with_capacity(config.restarts);
    let mut best: Option<(f64, StartOutcome)> = None;
    for start_idx in 0..config.restarts {
        let start = if start_idx == 0 {
            init.clone()
        } else {
            perturb_start(&init, config.seed, start_idx as u64)
        };
        let outcome = run_single_start(&ctx, &start, config)?;
        restart_values.push(outcome.value);
        let better = match &best {
            None => true,
            Some((best_value, _)) => outcome.value < *best_value,
        };
        if better {
            best = Some((outcome.value, outcome));
        }
    }
    let (_, winner) = best.expect("at least one start");

    let canonical = EchelonLoadings::from_free_vec(data.p(), k, &winner.x).canonicalized();
    let eval = ctx.evaluate(&canonical)?;
    Ok(FitResult {
        loadings: canonical,
        eval,
        iterations: winner.iterations,
        converged: winner.converged,
        restart_values,
    })
}

struct StartOutcome {
    x: DVector<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn perturb_start(init: &EchelonLoadings, seed: u64, start_idx: u64) -> EchelonLoadings {
    let (p, k) = (init.p(), init.k());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start_idx);
    let global_rms = rms(init.to_free_vec().as_slice());
    let mut l = init.matrix().clone();
    for j in 0..k {
        let col_free: Vec<f64> = (j..p).map(|i| l[(i, j)]).collect();
        let mut scale = rms(&col_free);
        if scale == 0.0 {
            scale = global_rms;
        }
        if scale == 0.0 {
            scale = 1.0;
        }
        for i in j..p {
            let noise: f64 = rng.sample(StandardNormal);
            l[(i, j)] += 0.1 * scale * noise;
        }
    }
    EchelonLoadings::new(l).expect("perturbation preserves the echelon pattern")
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn run_single_start(
    ctx: &ProfileContext<'_>,
    start: &EchelonLoadings,
    config: &OptimConfig,
) -> Result<StartOutcome> {
    let (p, k) = (start.p(), start.k());
    let variant = config.objective_variant;
    let mut x = start.to_free_vec();
    let (mut f, mut grad) = eval_point(ctx, p, k, &x, variant)?;
    if !f.is_finite() {
        return Err(Error::Divergence("objective not finite at the start".into()));
    }

    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut div_run = 0usize;
    let mut div_window_norm = x.norm();
    let mut stagnant = 0usize;

    while grad.amax() > config.gradient_tolerance && iterations < config.max_iterations {
        let mut dir = two_loop_direction(&history, &grad);
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = -grad.clone();
            slope = grad.dot(&dir);
        }
        let mut t = if history.is_empty() {
            (1.0 / grad.norm()).min(1.0)
        } else {
            1.0
        };
        // Near the optimum the true per-step decrease falls below the
        // floating-point resolution of the objective. Once the predicted
        // Armijo decrease is sub-noise, progress is verified on the masked
        // gradient instead of the objective.
        let noise = 8.0 * f64::EPSILON * f.abs().max(1.0);
        let grad_inf = grad.amax();
        let mut accepted: Option<(DVector<f64>, f64, Option<DVector<f64>>)> = None;
        for _ in 0..MAX_BACKTRACKS {
            let x_new = &x + &dir * t;
            let Some(f_new) = try_value(ctx, p, k, &x_new, variant) else {
                t *= 0.5;
                continue;
            };
            let predicted = ARMIJO_C1 * t * slope;
            if f_new <= f + predicted + noise {
                if predicted.abs() > noise {
                    accepted = Some((x_new, f_new, None));
                    break;
                }
                if let Ok((_, g_new)) = eval_point(ctx, p, k, &x_new, variant) {
                    if g_new.amax() <= grad_inf * (1.0 - 1e-4) {
                        accepted = Some((x_new, f_new, Some(g_new)));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, cached_grad)) = accepted else {
            break; // neither the objective nor the gradient can improve
        };
        iterations += 1;

        let norm_prev = x.norm();
        let norm_new = x_new.norm();
        if f_new < f && norm_new > norm_prev {
            if div_run == 0 {
                div_window_norm = norm_prev;
            }
            div_run += 1;
        } else {
            div_run = 0;
        }
        if div_run >= DIVERGENCE_RUN && norm_new > 10.0 * div_window_norm.max(1e-12) {
            return Err(Error::Divergence(format!(
                "objective decreased over {DIVERGENCE_RUN} consecutive iterations while \
                 the loadings norm grew from {div_window_norm:e} to {norm_new:e}"
            )));
        }

        let grad_new = match cached_grad {
            Some(g) => g,
            None => eval_point(ctx, p, k, &x_new, variant)?.1,
        };
        let s = &x_new - &x;
        let yv = &grad_new - &grad;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            history.push_back((s, yv, 1.0 / sy));
            if history.len() > config.memory {
                history.pop_front();
            }
        }
        let rel_decrease = (f - f_new) / f.abs().max(1.0);
        let grad_improved = grad_new.amax() <= grad_inf * (1.0 - 1e-3);
        x = x_new;
        f = f_new;
        grad = grad_new;
        // Stop on relative-change stagnation, but only when the gradient has
        // also stopped improving: ulp-sized objective steps with a
        // contracting gradient are the quasi-Newton endgame, not
        // convergence failure.
        if rel_decrease <= config.step_tolerance && !grad_improved {
            stagnant += 1;
            if stagnant >= 3 {
                break;
            }
        } else {
            stagnant = 0;
        }
    }

    let converged = grad.amax() <= config.gradient_tolerance;
    Ok(StartOutcome { x, value: f, iterations, converged })
}

fn eval_point(
    ctx: &ProfileContext<'_>,
    p: usize,
    k: usize,
    x: &DVector<f64>,
    variant: ObjectiveVariant,
) -> Result<(f64, DVector<f64>)> {
    let loadings = EchelonLoadings::from_free_vec(p, k, x);
    let (value, grad) = ctx.value_and_gradient(&loadings, variant)?;
    Ok((value, EchelonLoadings::new(grad).expect("gradient is masked").to_free_vec()))
}

fn try_value(
    ctx: &ProfileContext<'_>,
    p: usize,
    k: usize,
    x: &DVector<f64>,
    variant: ObjectiveVariant,
) -> Option<f64> {
    let loadings = EchelonLoadings::from_free_vec(p, k, x);
    match ctx.evaluate(&loadings) {
        Ok(eval) => {
            let v = eval.objective(variant);
            v.is_finite().then_some(v)
        }
        Err(_) => None,
    }
}

fn two_loop_direction(
    history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    grad: &DVector<f64>,
) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    let gamma = history
        .back()
        .map(|(s, y, _)| s.dot(y) / y.dot(y).max(f64::MIN_POSITIVE))
        .unwrap_or(1.0);
    let mut r = q * gamma;
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&r);
        r.axpy(a - b, s, 1.0);
    }
    -r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::profile_gradient_variant;
    use crate::linalg::{max_principal_angle, orthonormal_basis, standard_normal_matrix};
    use crate::simulation::{gen_dataset, gen_true_params, GenMode};
    use approx::assert_relative_eq;

    fn simulated(seed: u64, n: usize, p: usize, k: usize, d_star: f64) -> Dataset {
        let truth = gen_true_params(
            p,
            k,
            2,
            d_star,
            1.0,
            2.0,
            &(DMatrix::identity(2, 2) * 2.0),
            seed,
        )
        .unwrap();
        gen_dataset(&truth, n, seed ^ 0x5eed, GenMode::Gaussian).unwrap()
    }

    #[test]
    fn init_matches_tipping_bishop_closed_form() {
        // S_X = diag(5, 2, 1, 1): tau0 = 4/3, d1 = 5/(4/3) - 1 = 2.75.
        let n = 4;
        let mut x = DMatrix::zeros(n, 4);
        for (j, v) in [5.0_f64, 2.0, 1.0, 1.0].iter().enumerate() {
            x[(j, j)] = (v * n as f64).sqrt();
        }
        let y = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 2.0, -2.0]);
        let data = Dataset::new(y, x).unwrap();
        let l = init_from_pca(&data, 1).unwrap();
        assert_relative_eq!(l.matrix()[(0, 0)], 2.75_f64.sqrt(), epsilon = 1e-10);
        for i in 1..4 {
            assert!(l.matrix()[(i, 0)].abs() < 1e-10);
        }
    }

    #[test]
    fn init_k_zero_is_empty() {
        let data = simulated(1, 40, 5, 2, 3.0);
        let l = init_from_pca(&data, 0).unwrap();
        assert_eq!(l.k(), 0);
    }

    #[test]
    fn init_reassembly_has_flat_tail() {
        use crate::linalg::sym_eigen_desc;
        use crate::model::spiked_cov_assemble;
        let data = simulated(2, 60, 6, 2, 4.0);
        let k = 2;
        let l = init_from_pca(&data, k).unwrap();
        let s_x = data.sample_cov_x();
        let (eigs, _) = sym_eigen_desc(&s_x);
        let tau0 = eigs.iter().skip(k).sum::<f64>() / (6 - k) as f64;
        let cov = spiked_cov_assemble(tau0, &l).unwrap();
        let (cov_eigs, _) = sym_eigen_desc(&cov);
        for j in k..6 {
            assert_relative_eq!(cov_eigs[j], tau0, epsilon = 1e-8 * tau0);
        }
    }

    #[test]
    fn init_rejects_insufficient_rank() {
        // n = k + 1 rows, centered: rank(S_X) <= k.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = 2;
        let raw = standard_normal_matrix(&mut rng, k + 1, 5);
        let mut x = raw.clone();
        for j in 0..5 {
            let mean = raw.column(j).mean();
            x.column_mut(j).add_scalar_mut(-mean);
        }
        let y = standard_normal_matrix(&mut rng, k + 1, 1);
        let data = Dataset::new(y, x).unwrap();
        assert!(matches!(
            init_from_pca(&data, k),
            Err(Error::ExistenceViolation(_))
        ));
        assert!(matches!(
            minimize_profile(&data, k, &OptimConfig::default()),
            Err(Error::ExistenceViolation(_) | Error::Divergence(_))
        ));
    }

    #[test]
    fn unrestricted_fit_recovers_ols() {
        let data = simulated(4, 150, 4, 2, 3.0);
        let config = OptimConfig { seed: 9, ..OptimConfig::default() };
        let fit = minimize_profile(&data, 4, &config).unwrap();
        let alpha = &fit.eval.alpha_bar;
        let beta = fit.loadings.matrix() * alpha;
        let gram = data.x().transpose() * data.x();
        let ols = gram.try_inverse().unwrap() * data.x().transpose() * data.y();
        assert!(
            (&beta - &ols).norm() <= 1e-4 * ols.norm(),
            "beta off by {:e}",
            (&beta - &ols).norm() / ols.norm()
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let data = simulated(5, 80, 5, 2, 3.0);
        let config = OptimConfig { seed: 1234, ..OptimConfig::default() };
        let fit1 = minimize_profile(&data, 2, &config).unwrap();
        let fit2 = minimize_profile(&data, 2, &config).unwrap();
        assert_eq!(fit1.loadings.matrix(), fit2.loadings.matrix());
        assert_eq!(fit1.eval.value.to_bits(), fit2.eval.value.to_bits());
        assert_eq!(fit1.restart_values, fit2.restart_values);
        assert_eq!(fit1.iterations, fit2.iterations);
    }

    #[test]
    fn strong_signal_recovers_subspace() {
        let truth = gen_true_params(
            10,
            2,
            2,
            100.0,
            1.0,
            2.0,
            &(DMatrix::identity(2, 2) * 2.0),
            42,
        )
        .unwrap();
        let data = gen_dataset(&truth, 500, 43, GenMode::Gaussian).unwrap();
        let fit = minimize_profile(&data, 2, &OptimConfig::default()).unwrap();
        let fitted_basis = orthonormal_basis(fit.loadings.matrix());
        let angle = max_principal_angle(&fitted_basis, truth.u_star());
        assert!(angle <= 0.05, "principal angle {angle}");
    }

    #[test]
    fn never_worse_than_the_spectral_start() {
        let data = simulated(6, 70, 6, 3, 2.0);
        let config = OptimConfig::default();
        let ctx = ProfileContext::new(&data);
        let init_value = ctx
            .evaluate(&init_from_pca(&data, 3).unwrap())
            .unwrap()
            .objective(config.objective_variant);
        let fit = minimize_profile(&data, 3, &config).unwrap();
        assert!(fit.eval.objective(config.objective_variant) <= init_value + 1e-9);
        assert!(fit.loadings.is_canonical());
    }

    #[test]
    fn converged_flag_implies_small_gradient() {
        let data = simulated(7, 90, 5, 2, 3.0);
        let config = OptimConfig::default();
        let fit = minimize_profile(&data, 2, &config).unwrap();
        assert!(fit.converged);
        let grad =
            profile_gradient_variant(&fit.loadings, &data, config.objective_variant).unwrap();
        assert!(
            grad.amax() <= config.gradient_tolerance * 10.0,
            "gradient at canonical optimum: {:e}",
            grad.amax()
        );
    }

    #[test]
    fn k_zero_short_circuits() {
        let data = simulated(8, 50, 4, 2, 3.0);
        let fit = minimize_profile(&data, 0, &OptimConfig::default()).unwrap();
        assert_eq!(fit.iterations, 0);
        assert!(fit.converged);
        assert_eq!(fit.restart_values.len(), 1);
    }

    #[test]
    fn config_validation() {
        let data = simulated(9, 50, 4, 2, 3.0);
        let bad = OptimConfig { restarts: 0, ..OptimConfig::default() };
        assert!(minimize_profile(&data, 1, &bad).is_err());
    }
}
