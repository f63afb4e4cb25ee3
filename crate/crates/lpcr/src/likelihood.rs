//! Objective functions: the joint negative log-likelihood `g_n`, its
//! reparameterized form `h_n`, the profile objective over echelon loadings,
//! the closed-form partial minimizers, and the analytic profile gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{pinv_sym, spd_log_det, RANK_TOL};
use crate::model::{symmetrize, Dataset, EchelonLoadings};

/// Which profile objective the fitter minimizes.
///
/// The displayed profile is `log|Y'Q_{XL}Y| + p log tr[X'X (I + LL')^{-1}]`.
/// Profiling the reparameterized likelihood over `(Sigma, alpha, tau)`
/// analytically retains an extra `log|I_p + LL'|` term, which is not
/// constant in `L`; `FullProfile` keeps it and is the default, so that the
/// minimizer also minimizes `g_n` over the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveVariant {
    /// `log|Y'Q_{XL}Y| + p log tr[X'X (I + LL')^{-1}]`.
    AsDisplayed,
    /// The above plus `log|I_p + LL'|`.
    #[default]
    FullProfile,
}

impl ObjectiveVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveVariant::AsDisplayed => "as-displayed",
            ObjectiveVariant::FullProfile => "full-profile",
        }
    }
}

impl std::str::FromStr for ObjectiveVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-displayed" => Ok(ObjectiveVariant::AsDisplayed),
            "full-profile" => Ok(ObjectiveVariant::FullProfile),
            other => Err(Error::InvalidParameter(format!(
                "unknown objective variant {other:?} (expected as-displayed or full-profile)"
            ))),
        }
    }
}

/// Everything the profile objective yields at a fixed `L`: the displayed
/// objective value, the partial minimizers, and the two building blocks.
///
/// The residual log-determinant uses the un-normalized Gram `Y'Q_XL Y`, so
/// profile values are not comparable across different sample sizes; use
/// [`neg_loglik_g`] for cross-`n` comparisons.
#[derive(Debug, Clone)]
pub struct ProfileEval {
    /// `log|Y'Q_{XL}Y| + p log tr[X'X (I + LL')^{-1}]` (displayed profile).
    pub value: f64,
    /// `(L'X'XL)^+ L'X'Y`.
    pub alpha_bar: DMatrix<f64>,
    /// `Y'Q_{XL}Y / n`.
    pub sigma_bar: DMatrix<f64>,
    /// `tr[X'X (I + LL')^{-1}] / (n p)`.
    pub tau_bar: f64,
    /// `log|Y'Q_{XL}Y|`.
    pub residual_logdet: f64,
    /// `tr[X'X (I + LL')^{-1}]`.
    pub trace_term: f64,
    /// `log|I_p + LL'|`, the term the displayed profile omits.
    pub spike_logdet: f64,
}

impl ProfileEval {
    /// Objective value under the requested variant.
    pub fn objective(&self, variant: ObjectiveVariant) -> f64 {
        match variant {
            ObjectiveVariant::AsDisplayed => self.value,
            ObjectiveVariant::FullProfile => self.value + self.spike_logdet,
        }
    }
}

/// Joint negative log-likelihood in precision form:
/// `-log|Omega| + tr[(Y-Xb)'(Y-Xb) Omega]/n - log|Omega_X| + tr(S_X Omega_X)`.
pub fn neg_loglik_g(
    beta: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    omega_x: &DMatrix<f64>,
    data: &Dataset,
) -> Result<f64> {
    let (n, p, r) = (data.n(), data.p(), data.r());
    if beta.shape() != (p, r) || omega.shape() != (r, r) || omega_x.shape() != (p, p) {
        return Err(Error::InvalidParameter(format!(
            "shape mismatch: beta {:?}, omega {:?}, omega_x {:?} for n={n}, p={p}, r={r}",
            beta.shape(),
            omega.shape(),
            omega_x.shape()
        )));
    }
    check_symmetric(omega, "omega")?;
    check_symmetric(omega_x, "omega_x")?;
    let log_det_omega = spd_log_det(omega, "omega")?;
    let log_det_omega_x = spd_log_det(omega_x, "omega_x")?;
    let resid = data.y() - data.x() * beta;
    let fit_term = (resid.transpose() * &resid * omega).trace() / n as f64;
    let cov_term = (data.sample_cov_x() * omega_x).trace();
    Ok(-log_det_omega + fit_term - log_det_omega_x + cov_term)
}

/// The reparameterized negative log-likelihood
/// `h_n(Sigma, alpha, tau, L)`, scaled as in the profile derivation.
pub fn reparameterized_neg_loglik(
    sigma: &DMatrix<f64>,
    alpha: &DMatrix<f64>,
    tau: f64,
    loadings: &EchelonLoadings,
    data: &Dataset,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let n = data.n() as f64;
    let p = loadings.p();
    let l = loadings.matrix();
    let log_det_sigma = spd_log_det(sigma, "sigma")?;
    let sigma_inv = nalgebra::Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::InvalidParameter("sigma is not positive definite".into()))?
        .inverse();
    let resid = data.y() - data.x() * (l * alpha);
    let fit_term = (resid.transpose() * &resid * &sigma_inv).trace() / n;
    let mut inner = l.transpose() * l;
    for i in 0..inner.nrows() {
        inner[(i, i)] += 1.0;
    }
    let spike_logdet = spd_log_det(&inner, "I + L'L")?;
    let gram = data.x().transpose() * data.x();
    let chol = nalgebra::Cholesky::new(inner).expect("I + L'L is PD");
    let c = l.transpose() * &gram * l;
    let trace_term = gram.trace() - chol.solve(&c).trace();
    Ok(log_det_sigma + fit_term + p as f64 * tau.ln() + spike_logdet + trace_term / (n * tau))
}

/// Precomputed per-dataset quantities reused across profile evaluations.
pub struct ProfileContext<'a> {
    data: &'a Dataset,
    gram: DMatrix<f64>,  // X'X
    cross: DMatrix<f64>, // X'Y
    yty: DMatrix<f64>,   // Y'Y
    gram_trace: f64,
}

/// Intermediates shared by the objective and gradient at one `L`.
struct EvalCore {
    eval: ProfileEval,
    /// Cholesky of the residual Gram `S = Y'Q_{XL}Y`.
    resid_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Pseudo-inverse of `C = L'X'XL`.
    c_pinv: DMatrix<f64>,
    /// `(I_k + L'L)^{-1}`.
    woodbury_inv: DMatrix<f64>,
}

impl<'a> ProfileContext<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let x = data.x();
        let mut gram = x.transpose() * x;
        symmetrize(&mut gram);
        let cross = x.transpose() * data.y();
        let mut yty = data.y().transpose() * data.y();
        symmetrize(&mut yty);
        let gram_trace = gram.trace();
        Self { data, gram, cross, yty, gram_trace }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    fn check_shape(&self, loadings: &EchelonLoadings) -> Result<()> {
        if loadings.p() != self.data.p() {
            return Err(Error::InvalidParameter(format!(
                "loadings have p = {}, dataset has p = {}",
                loadings.p(),
                self.data.p()
            )));
        }
        Ok(())
    }

    fn core(&self, loadings: &EchelonLoadings) -> Result<EvalCore> {
        self.check_shape(loadings)?;
        let (n, p) = (self.data.n(), self.data.p());
        let l = loadings.matrix();
        let k = loadings.k();

        // Residual Gram S = Y'Y - (Q'Y)'(Q'Y), Q an orthonormal basis of
        // col(XL) from a rank-revealing QR.
        let mut resid_gram = self.yty.clone();
        if k > 0 {
            let xl = self.data.x() * l;
            let qr = xl.col_piv_qr();
            let q = qr.q();
            let rmat = qr.r();
            let dmax = (0..k.min(rmat.nrows()))
                .map(|j| rmat[(j, j)].abs())
                .fold(0.0_f64, f64::max);
            let rank = (0..k.min(rmat.nrows()))
                .take_while(|&j| rmat[(j, j)].abs() > dmax * RANK_TOL && rmat[(j, j)] != 0.0)
                .count();
            if rank > 0 {
                let qty = q.columns(0, rank).transpose() * self.data.y();
                resid_gram -= qty.transpose() * &qty;
            }
        }
        symmetrize(&mut resid_gram);
        let (resid_eigs, _) = crate::linalg::sym_eigen_desc(&resid_gram);
        // scale against Y'Y so that fully interpolated responses register
        // as singular even though every residual eigenvalue is noise
        let emax = resid_eigs[0].max(self.yty.trace()).max(f64::MIN_POSITIVE);
        let emin = resid_eigs[resid_eigs.len() - 1];
        if !(emin > emax * RANK_TOL) {
            return Err(Error::DegenerateLikelihood(format!(
                "residual Gram matrix Y'Q_XL Y is numerically singular \
                 (min/max eigenvalue = {:e})",
                emin / emax
            )));
        }
        let resid_chol = nalgebra::Cholesky::new(resid_gram.clone()).ok_or_else(|| {
            Error::DegenerateLikelihood(
                "residual Gram matrix Y'Q_XL Y is not positive definite".into(),
            )
        })?;
        let cl = resid_chol.l();
        let residual_logdet = 2.0 * (0..cl.nrows()).map(|i| cl[(i, i)].ln()).sum::<f64>();

        // Woodbury pieces on the k x k scale.
        let mut inner = l.transpose() * l;
        for i in 0..k {
            inner[(i, i)] += 1.0;
        }
        let inner_chol = nalgebra::Cholesky::new(inner).expect("I + L'L is PD");
        let icl = inner_chol.l();
        let spike_logdet = 2.0 * (0..k).map(|i| icl[(i, i)].ln()).sum::<f64>();
        let woodbury_inv = inner_chol.inverse();

        let mut c = l.transpose() * &self.gram * l;
        symmetrize(&mut c);
        let trace_term = self.gram_trace - (&c * &woodbury_inv).trace();
        let tau_bar = trace_term / (n as f64 * p as f64);

        let c_pinv = pinv_sym(&c);
        let alpha_bar = &c_pinv * (l.transpose() * &self.cross);
        let sigma_bar = &resid_gram / n as f64;

        let value = residual_logdet + p as f64 * trace_term.ln();
        Ok(EvalCore {
            eval: ProfileEval {
                value,
                alpha_bar,
                sigma_bar,
                tau_bar,
                residual_logdet,
                trace_term,
                spike_logdet,
            },
            resid_chol,
            c_pinv,
            woodbury_inv,
        })
    }

    /// Profile objective and partial minimizers at `L`.
    pub fn evaluate(&self, loadings: &EchelonLoadings) -> Result<ProfileEval> {
        Ok(self.core(loadings)?.eval)
    }

    /// Objective value and masked gradient in one pass.
    pub fn value_and_gradient(
        &self,
        loadings: &EchelonLoadings,
        variant: ObjectiveVariant,
    ) -> Result<(f64, DMatrix<f64>)> {
        let core = self.core(loadings)?;
        let grad = self.gradient_from_core(loadings, &core, variant);
        Ok((core.eval.objective(variant), grad))
    }

    /// Masked gradient of the profile objective at `L`.
    pub fn gradient(
        &self,
        loadings: &EchelonLoadings,
        variant: ObjectiveVariant,
    ) -> Result<DMatrix<f64>> {
        let core = self.core(loadings)?;
        Ok(self.gradient_from_core(loadings, &core, variant))
    }

    fn gradient_from_core(
        &self,
        loadings: &EchelonLoadings,
        core: &EvalCore,
        variant: ObjectiveVariant,
    ) -> DMatrix<f64> {
        let l = loadings.matrix();
        let (p, k) = (loadings.p(), loadings.k());
        if k == 0 {
            return DMatrix::zeros(p, 0);
        }

        // d log|Y'Q_XL Y| = -2 X'Y S^-1 Y'XL C^+ + 2 X'XL C^+ L'X'Y S^-1 Y'XL C^+
        let cross_l = self.cross.transpose() * l; // r x k = Y'XL
        let sinv_cross_l = core.resid_chol.solve(&cross_l); // r x k
        let right = &sinv_cross_l * &core.c_pinv; // r x k
        let gl = &self.gram * l; // p x k
        let inner_kk = cross_l.transpose() * &right; // k x k
        let mut grad = -2.0 * &self.cross * &right + 2.0 * &gl * (&core.c_pinv * inner_kk);

        // p * d log tr[X'X (I + LL')^{-1}]
        //   = -(2 p / T) W X'X W L, with W L = L M and W v = v - L M (L'v).
        let lm = l * &core.woodbury_inv; // p x k
        let g_lm = &self.gram * &lm; // p x k
        let w_g_lm = &g_lm - &lm * (l.transpose() * &g_lm);
        grad += w_g_lm * (-2.0 * p as f64 / core.eval.trace_term);

        // d log|I_p + LL'| = 2 (I + LL')^{-1} L = 2 L M
        if variant == ObjectiveVariant::FullProfile {
            grad += 2.0 * &lm;
        }

        EchelonLoadings::mask_to_pattern(&mut grad);
        grad
    }
}

/// Closed-form partial minimizers `(alpha_bar, Sigma_bar, tau_bar)` at `L`.
pub fn partial_minimizers(
    loadings: &EchelonLoadings,
    data: &Dataset,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let eval = ProfileContext::new(data).evaluate(loadings)?;
    Ok((eval.alpha_bar, eval.sigma_bar, eval.tau_bar))
}

/// The profile objective and partial minimizers at `L`.
pub fn profile_objective(loadings: &EchelonLoadings, data: &Dataset) -> Result<ProfileEval> {
    ProfileContext::new(data).evaluate(loadings)
}

/// Masked gradient of the profile objective at `L` under the default
/// (full-profile) variant.
pub fn profile_gradient(loadings: &EchelonLoadings, data: &Dataset) -> Result<DMatrix<f64>> {
    ProfileContext::new(data).gradient(loadings, ObjectiveVariant::default())
}

/// Masked gradient under an explicit variant.
pub fn profile_gradient_variant(
    loadings: &EchelonLoadings,
    data: &Dataset,
    variant: ObjectiveVariant,
) -> Result<DMatrix<f64>> {
    ProfileContext::new(data).gradient(loadings, variant)
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_semi_orthogonal, standard_normal_matrix};
    use nalgebra::DVector;
    use crate::model::echelon_canonicalize;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(seed: u64, n: usize, p: usize, r: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = standard_normal_matrix(&mut rng, n, p);
        let beta = standard_normal_matrix(&mut rng, p, r) * 0.5;
        let y = &x * beta + standard_normal_matrix(&mut rng, n, r);
        Dataset::new(y, x).unwrap()
    }

    fn random_loadings(seed: u64, p: usize, k: usize) -> EchelonLoadings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        echelon_canonicalize(&standard_normal_matrix(&mut rng, p, k)).unwrap()
    }

    /// Dense textbook evaluation of the three partial minimizers, forming
    /// the n x n projector explicitly.
    fn dense_partial_minimizers(
        l: &DMatrix<f64>,
        data: &Dataset,
    ) -> (DMatrix<f64>, DMatrix<f64>, f64) {
        let n = data.n() as f64;
        let p = data.p() as f64;
        let xl = data.x() * l;
        let c = xl.transpose() * &xl;
        let c_inv = pinv_sym(&c);
        let alpha = &c_inv * xl.transpose() * data.y();
        let q = DMatrix::identity(data.n(), data.n()) - &xl * &c_inv * xl.transpose();
        let sigma = data.y().transpose() * q * data.y() / n;
        let dense = DMatrix::identity(l.nrows(), l.nrows()) + l * l.transpose();
        let tau = (data.x().transpose() * data.x() * dense.try_inverse().unwrap()).trace() / (n * p);
        (alpha, sigma, tau)
    }

    #[test]
    fn g_collapses_to_p_on_identity_inputs() {
        // S_X = I_p via X = sqrt(n) I, all-zero response.
        let p = 3;
        let n = 3;
        let x = DMatrix::identity(n, p) * (n as f64).sqrt();
        let y = DMatrix::zeros(n, 2);
        let data = Dataset::new(y, x).unwrap();
        let v = neg_loglik_g(
            &DMatrix::zeros(p, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(p, p),
            &data,
        )
        .unwrap();
        assert_relative_eq!(v, p as f64, epsilon = 1e-12);
    }

    #[test]
    fn g_hand_evaluated_instance() {
        // n=2, p=1, r=1, zero residuals, S_X = 1.
        let y = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let data = Dataset::new(y, x).unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        let v = neg_loglik_g(&one, &one, &one, &data).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn g_invariant_under_joint_row_permutation() {
        let data = random_dataset(4, 12, 3, 2);
        let beta = DMatrix::from_fn(3, 2, |i, j| 0.1 * (i + j) as f64);
        let omega = DMatrix::identity(2, 2) * 1.3;
        let omega_x = DMatrix::identity(3, 3) * 0.8;
        let v1 = neg_loglik_g(&beta, &omega, &omega_x, &data).unwrap();
        let perm: Vec<usize> = vec![5, 2, 7, 0, 11, 3, 9, 1, 10, 4, 8, 6];
        let y2 = DMatrix::from_fn(12, 2, |i, j| data.y()[(perm[i], j)]);
        let x2 = DMatrix::from_fn(12, 3, |i, j| data.x()[(perm[i], j)]);
        let data2 = Dataset::new(y2, x2).unwrap();
        let v2 = neg_loglik_g(&beta, &omega, &omega_x, &data2).unwrap();
        assert_relative_eq!(v1, v2, epsilon = 1e-12 * v1.abs());
    }

    #[test]
    fn g_rejects_non_pd_precision() {
        let data = random_dataset(5, 8, 2, 1);
        let beta = DMatrix::zeros(2, 1);
        let omega = DMatrix::from_element(1, 1, -1.0);
        let omega_x = DMatrix::identity(2, 2);
        assert!(matches!(
            neg_loglik_g(&beta, &omega, &omega_x, &data),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn partial_minimizers_reduce_to_ols_when_l_is_identity() {
        let data = random_dataset(7, 30, 4, 2);
        let l = EchelonLoadings::new(DMatrix::identity(4, 4)).unwrap();
        let (alpha, _, _) = partial_minimizers(&l, &data).unwrap();
        let gram = data.x().transpose() * data.x();
        let ols = gram.clone().try_inverse().unwrap() * data.x().transpose() * data.y();
        assert_relative_eq!(alpha, ols, epsilon = 1e-9 * ols.norm());
    }

    #[test]
    fn partial_minimizers_k_zero_limits() {
        let data = random_dataset(8, 20, 3, 2);
        let l = EchelonLoadings::empty(3);
        let (alpha, sigma, tau) = partial_minimizers(&l, &data).unwrap();
        assert_eq!(alpha.shape(), (0, 2));
        let yty = data.y().transpose() * data.y() / 20.0;
        assert_relative_eq!(sigma, yty, epsilon = 1e-12 * yty.norm());
        let expect_tau = (data.x().transpose() * data.x()).trace() / (20.0 * 3.0);
        assert_relative_eq!(tau, expect_tau, epsilon = 1e-12 * expect_tau);
    }

    #[test]
    fn partial_minimizers_match_dense_oracle() {
        let data = random_dataset(9, 3, 2, 2);
        let l = random_loadings(10, 2, 1);
        let (alpha, sigma, tau) = partial_minimizers(&l, &data).unwrap();
        let (da, ds, dt) = dense_partial_minimizers(l.matrix(), &data);
        assert_relative_eq!(alpha, da, epsilon = 1e-10 * da.norm().max(1.0));
        assert_relative_eq!(sigma, ds, epsilon = 1e-10 * ds.norm());
        assert_relative_eq!(tau, dt, epsilon = 1e-12 * dt);
    }

    #[test]
    fn profile_value_k_zero() {
        let data = random_dataset(11, 15, 3, 2);
        let eval = profile_objective(&EchelonLoadings::empty(3), &data).unwrap();
        let yty = data.y().transpose() * data.y();
        let expect = spd_log_det(&yty, "yty").unwrap()
            + 3.0 * (data.x().transpose() * data.x()).trace().ln();
        assert_relative_eq!(eval.value, expect, epsilon = 1e-12 * expect.abs());
        assert_eq!(eval.spike_logdet, 0.0);
    }

    #[test]
    fn profile_invariant_under_right_rotation() {
        let data = random_dataset(12, 25, 5, 2);
        let l = random_loadings(13, 5, 2);
        let base = profile_objective(&l, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..5 {
            let o = haar_semi_orthogonal(&mut rng, 2, 2);
            let rotated = echelon_canonicalize(&(l.matrix() * o)).unwrap();
            let eval = profile_objective(&rotated, &data).unwrap();
            assert_relative_eq!(eval.value, base.value, epsilon = 1e-10 * base.value.abs());
            assert_relative_eq!(
                eval.objective(ObjectiveVariant::FullProfile),
                base.objective(ObjectiveVariant::FullProfile),
                epsilon = 1e-10 * base.value.abs()
            );
        }
    }

    #[test]
    fn profile_eval_internal_consistency() {
        let data = random_dataset(15, 30, 4, 2);
        let l = random_loadings(16, 4, 2);
        let eval = profile_objective(&l, &data).unwrap();
        let expect = eval.residual_logdet + 4.0 * eval.trace_term.ln();
        assert_relative_eq!(eval.value, expect, epsilon = 1e-12 * expect.abs());
        assert_relative_eq!(
            eval.tau_bar,
            eval.trace_term / (30.0 * 4.0),
            epsilon = 1e-14 * eval.tau_bar
        );
        assert!(eval.tau_bar > 0.0);
    }

    #[test]
    fn h_n_differences_equal_full_profile_differences() {
        // Evaluating h_n at the partial minimizers of two different loadings
        // differs exactly by the full-profile objective difference; the
        // n-dependent additive constants cancel.
        let data = random_dataset(17, 28, 5, 2);
        let l1 = random_loadings(18, 5, 2);
        let l2 = random_loadings(19, 5, 2);
        let e1 = profile_objective(&l1, &data).unwrap();
        let e2 = profile_objective(&l2, &data).unwrap();
        let h1 = reparameterized_neg_loglik(&e1.sigma_bar, &e1.alpha_bar, e1.tau_bar, &l1, &data)
            .unwrap();
        let h2 = reparameterized_neg_loglik(&e2.sigma_bar, &e2.alpha_bar, e2.tau_bar, &l2, &data)
            .unwrap();
        let lhs = h1 - h2;
        let rhs = e1.objective(ObjectiveVariant::FullProfile)
            - e2.objective(ObjectiveVariant::FullProfile);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-9 * lhs.abs().max(1.0));
        // ... and differs from the displayed-profile difference by exactly
        // the spike log-determinant gap.
        let displayed = e1.value - e2.value;
        assert_relative_eq!(
            lhs - displayed,
            e1.spike_logdet - e2.spike_logdet,
            epsilon = 1e-9
        );
    }

    #[test]
    fn partial_minimality_of_closed_forms() {
        // h_n at the closed-form minimizers is no larger than at perturbed
        // parameter values.
        let data = random_dataset(20, 26, 4, 2);
        let l = random_loadings(21, 4, 2);
        let e = profile_objective(&l, &data).unwrap();
        let base =
            reparameterized_neg_loglik(&e.sigma_bar, &e.alpha_bar, e.tau_bar, &l, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let da = standard_normal_matrix(&mut rng, 2, 2) * 0.05;
            let bump = standard_normal_matrix(&mut rng, 2, 2) * 0.05;
            let sigma_p = &e.sigma_bar + &bump * bump.transpose();
            let alpha_p = &e.alpha_bar + da;
            let tau_p = e.tau_bar * 1.07;
            let v = reparameterized_neg_loglik(&sigma_p, &alpha_p, tau_p, &l, &data).unwrap();
            assert!(v >= base - 1e-10, "perturbed {v} < base {base}");
        }
    }

    #[test]
    fn appending_zero_column_preserves_residual_logdet() {
        let data = random_dataset(23, 22, 4, 2);
        let l = random_loadings(24, 4, 2);
        let mut wide = DMatrix::zeros(4, 3);
        wide.view_mut((0, 0), (4, 2)).copy_from(l.matrix());
        let l_aug = EchelonLoadings::new(wide).unwrap();
        let e1 = profile_objective(&l, &data).unwrap();
        let e2 = profile_objective(&l_aug, &data).unwrap();
        assert!(e2.residual_logdet <= e1.residual_logdet + 1e-10);
        assert_relative_eq!(e2.residual_logdet, e1.residual_logdet, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_residual_gram_is_reported() {
        // Y inside col(XL): residual Gram is singular.
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let x = standard_normal_matrix(&mut rng, 10, 3);
        let l = EchelonLoadings::new(DMatrix::identity(3, 3)).unwrap();
        let y = &x * DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let data = Dataset::new(y, x).unwrap();
        assert!(matches!(
            profile_objective(&l, &data),
            Err(Error::DegenerateLikelihood(_))
        ));
    }

    fn fd_gradient(
        data: &Dataset,
        l: &EchelonLoadings,
        variant: ObjectiveVariant,
        step: f64,
    ) -> DMatrix<f64> {
        let ctx = ProfileContext::new(data);
        let (p, k) = (l.p(), l.k());
        let base = l.to_free_vec();
        let mut grad = DVector::zeros(base.len());
        for idx in 0..base.len() {
            let mut plus = base.clone();
            plus[idx] += step;
            let mut minus = base.clone();
            minus[idx] -= step;
            let fp = ctx
                .evaluate(&EchelonLoadings::from_free_vec(p, k, &plus))
                .unwrap()
                .objective(variant);
            let fm = ctx
                .evaluate(&EchelonLoadings::from_free_vec(p, k, &minus))
                .unwrap()
                .objective(variant);
            grad[idx] = (fp - fm) / (2.0 * step);
        }
        let mut mat = EchelonLoadings::from_free_vec(p, k, &grad).matrix().clone();
        EchelonLoadings::mask_to_pattern(&mut mat);
        mat
    }

    #[test]
    fn gradient_mask_is_exact() {
        let data = random_dataset(26, 40, 6, 2);
        let l = random_loadings(27, 6, 3);
        for variant in [ObjectiveVariant::AsDisplayed, ObjectiveVariant::FullProfile] {
            let g = profile_gradient_variant(&l, &data, variant).unwrap();
            for j in 0..3 {
                for i in 0..j {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = random_dataset(28, 40, 6, 2);
        let l = random_loadings(29, 6, 2);
        for variant in [ObjectiveVariant::AsDisplayed, ObjectiveVariant::FullProfile] {
            let g = profile_gradient_variant(&l, &data, variant).unwrap();
            let fd = fd_gradient(&data, &l, variant, 1e-5);
            let denom = fd.amax().max(1.0);
            assert!(
                (&g - &fd).amax() <= 1e-6 * denom,
                "variant {variant:?}: analytic vs fd mismatch {:e}",
                (&g - &fd).amax() / denom
            );
        }
    }

    #[test]
    fn directional_derivative_matches_gradient() {
        let data = random_dataset(30, 35, 5, 2);
        let l = random_loadings(31, 5, 2);
        let ctx = ProfileContext::new(&data);
        let g = ctx.gradient(&l, ObjectiveVariant::FullProfile).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..5 {
            let mut dir = standard_normal_matrix(&mut rng, 5, 2);
            EchelonLoadings::mask_to_pattern(&mut dir);
            let t = 1e-6;
            let plus = EchelonLoadings::new(l.matrix() + &dir * t).unwrap();
            let minus = EchelonLoadings::new(l.matrix() - &dir * t).unwrap();
            let fd = (ctx.evaluate(&plus).unwrap().objective(ObjectiveVariant::FullProfile)
                - ctx.evaluate(&minus).unwrap().objective(ObjectiveVariant::FullProfile))
                / (2.0 * t);
            let inner = g.dot(&dir);
            assert_relative_eq!(fd, inner, epsilon = 1e-6 * inner.abs().max(1.0));
        }
    }

    #[test]
    fn profile_consistency_with_g() {
        // g_n at parameters assembled from the partial minimizers is no
        // larger than at perturbed parameters.
        use crate::model::{PcrParams, SpikedCovariance};
        let data = random_dataset(33, 30, 4, 2);
        let l = random_loadings(34, 4, 2);
        let e = profile_objective(&l, &data).unwrap();
        let params =
            PcrParams::from_loadings(l.clone(), e.alpha_bar.clone(), e.sigma_bar.clone(), e.tau_bar)
                .unwrap();
        let omega = nalgebra::Cholesky::new(params.sigma.clone()).unwrap().inverse();
        let omega_x = params.sigma_x.precision();
        let base = neg_loglik_g(&params.beta, &omega, &omega_x, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..10 {
            let alpha_p = &e.alpha_bar + standard_normal_matrix(&mut rng, 2, 2) * 0.1;
            let bump = standard_normal_matrix(&mut rng, 2, 2) * 0.1;
            let sigma_p = &e.sigma_bar + &bump * bump.transpose();
            let tau_p = e.tau_bar * 0.9;
            let params_p =
                PcrParams::from_loadings(l.clone(), alpha_p, sigma_p, tau_p).unwrap();
            let omega_p = nalgebra::Cholesky::new(params_p.sigma.clone()).unwrap().inverse();
            let omega_xp = params_p.sigma_x.precision();
            let v = neg_loglik_g(&params_p.beta, &omega_p, &omega_xp, &data).unwrap();
            assert!(v >= base - 1e-9, "perturbed g {v} < profiled g {base}");
        }
        let _ = SpikedCovariance::new(e.tau_bar, l).unwrap();
    }
}
