//! Domain types for the spiked-covariance regression model and its
//! lower-echelon parameterization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

/// Column statistics computed on training rows and applied to both data
/// partitions: response means, predictor means, predictor standard
/// deviations (all ones when predictors were centered only).
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessing {
    pub y_mean: DVector<f64>,
    pub x_mean: DVector<f64>,
    pub x_std: DVector<f64>,
}

impl Preprocessing {
    /// Identity transform (no centering, unit scale).
    pub fn identity(r: usize, p: usize) -> Self {
        Self {
            y_mean: DVector::zeros(r),
            x_mean: DVector::zeros(p),
            x_std: DVector::from_element(p, 1.0),
        }
    }

    /// Standardize raw predictor rows with the stored training statistics.
    pub fn transform_x(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_raw.ncols() != self.x_mean.len() {
            return Err(Error::InvalidParameter(format!(
                "predictor matrix has {} columns, preprocessing expects {}",
                x_raw.ncols(),
                self.x_mean.len()
            )));
        }
        let mut x = x_raw.clone();
        for j in 0..x.ncols() {
            let mut col = x.column_mut(j);
            col.add_scalar_mut(-self.x_mean[j]);
            col /= self.x_std[j];
        }
        Ok(x)
    }
}

/// A centered response matrix `Y` (n x r) and predictor matrix `X` (n x p),
/// optionally carrying the training statistics that produced them.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    preprocessing: Option<Preprocessing>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        Self::build(y, x, None)
    }

    /// A dataset whose columns were centered (and predictors scaled) with
    /// the given statistics; column means must vanish relative to the
    /// column scale.
    pub fn with_preprocessing(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        Self::build(y, x, Some(preprocessing))
    }

    fn build(y: DMatrix<f64>, x: DMatrix<f64>, preprocessing: Option<Preprocessing>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "dataset requires n >= 1, p >= 1, r >= 1".into(),
            ));
        }
        if y.nrows() != x.nrows() {
            return Err(Error::InvalidParameter(format!(
                "Y has {} rows but X has {}",
                y.nrows(),
                x.nrows()
            )));
        }
        if let Some(prep) = &preprocessing {
            if prep.y_mean.len() != y.ncols() || prep.x_mean.len() != x.ncols() {
                return Err(Error::InvalidParameter(
                    "preprocessing dimensions do not match the dataset".into(),
                ));
            }
            for (label, m) in [("Y", &y), ("X", &x)] {
                for j in 0..m.ncols() {
                    let col = m.column(j);
                    let mean = col.mean();
                    let scale = (col.norm_squared() / m.nrows() as f64).sqrt();
                    if mean.abs() > 1e-10 * scale {
                        return Err(Error::InvalidParameter(format!(
                            "{label} column {j} has mean {mean:e} after centering"
                        )));
                    }
                }
            }
        }
        Ok(Self { y, x, preprocessing })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.y.ncols()
    }

    pub fn preprocessing(&self) -> Option<&Preprocessing> {
        self.preprocessing.as_ref()
    }

    /// Sample predictor covariance `X'X / n`.
    pub fn sample_cov_x(&self) -> DMatrix<f64> {
        let mut s = self.x.transpose() * &self.x / self.n() as f64;
        symmetrize(&mut s);
        s
    }

    /// Sample cross-covariance `X'Y / n`.
    pub fn sample_cov_xy(&self) -> DMatrix<f64> {
        self.x.transpose() * &self.y / self.n() as f64
    }
}

/// A `p x k` matrix with zero entries above the diagonal positions
/// (`L[i][j] = 0` for `j > i`); the optimization variable of the profile
/// likelihood. Canonical form additionally has nonnegative diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EchelonLoadings {
    l: DMatrix<f64>,
}

impl EchelonLoadings {
    /// Wraps a matrix that already satisfies the echelon pattern exactly.
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        if l.ncols() > l.nrows() {
            return Err(Error::InvalidParameter(format!(
                "echelon loadings need k <= p, got {}x{}",
                l.nrows(),
                l.ncols()
            )));
        }
        for j in 0..l.ncols() {
            for i in 0..j.min(l.nrows()) {
                if l[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) above the diagonal is {} (must be exactly 0)",
                        l[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { l })
    }

    /// All-zero loadings of the given shape.
    pub fn zeros(p: usize, k: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(p, k))
    }

    /// The `k = 0` loadings.
    pub fn empty(p: usize) -> Self {
        Self { l: DMatrix::zeros(p, 0) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn p(&self) -> usize {
        self.l.nrows()
    }

    pub fn k(&self) -> usize {
        self.l.ncols()
    }

    /// Number of unconstrained entries (`i >= j`).
    pub fn free_len(&self) -> usize {
        let (p, k) = (self.p(), self.k());
        p * k - k * (k.saturating_sub(1)) / 2
    }

    /// Free entries in column-major order.
    pub fn to_free_vec(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.free_len());
        let mut idx = 0;
        for j in 0..self.k() {
            for i in j..self.p() {
                v[idx] = self.l[(i, j)];
                idx += 1;
            }
        }
        v
    }

    /// Rebuilds loadings of the same shape from a free-entry vector.
    pub fn from_free_vec(p: usize, k: usize, v: &DVector<f64>) -> Self {
        let mut l = DMatrix::zeros(p, k);
        let mut idx = 0;
        for j in 0..k {
            for i in j..p {
                l[(i, j)] = v[idx];
                idx += 1;
            }
        }
        Self { l }
    }

    /// Zeroes the above-diagonal entries of an unconstrained gradient.
    pub fn mask_to_pattern(grad: &mut DMatrix<f64>) {
        for j in 0..grad.ncols() {
            for i in 0..j.min(grad.nrows()) {
                grad[(i, j)] = 0.0;
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        (0..self.k()).all(|j| self.l[(j, j)] >= 0.0)
    }

    /// Canonical form: columns whose diagonal entry is negative are negated.
    /// `LL'` is unchanged; all-zero columns are emitted unchanged.
    pub fn canonicalized(&self) -> Self {
        let mut l = self.l.clone();
        for j in 0..l.ncols() {
            if l[(j, j)] < 0.0 {
                l.column_mut(j).neg_mut();
            }
        }
        Self { l }
    }
}

/// Assembles the spiked covariance `tau * (I_p + L L')`; symmetric by
/// construction.
pub fn spiked_cov_assemble(tau: f64, loadings: &EchelonLoadings) -> Result<DMatrix<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spike scale tau must be positive, got {tau}"
        )));
    }
    let l = loadings.matrix();
    let mut cov = l * l.transpose();
    for i in 0..cov.nrows() {
        cov[(i, i)] += 1.0;
    }
    cov *= tau;
    symmetrize(&mut cov);
    Ok(cov)
}

/// A covariance of the form `tau * (I_p + L L')`: its `p - rank(L)` smallest
/// eigenvalues all equal `tau`.
#[derive(Debug, Clone)]
pub struct SpikedCovariance {
    tau: f64,
    loadings: EchelonLoadings,
}

impl SpikedCovariance {
    pub fn new(tau: f64, loadings: EchelonLoadings) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spike scale tau must be positive, got {tau}"
            )));
        }
        Ok(Self { tau, loadings })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn loadings(&self) -> &EchelonLoadings {
        &self.loadings
    }

    pub fn p(&self) -> usize {
        self.loadings.p()
    }

    pub fn k(&self) -> usize {
        self.loadings.k()
    }

    /// Dense `tau * (I_p + LL')`.
    pub fn assemble(&self) -> DMatrix<f64> {
        spiked_cov_assemble(self.tau, &self.loadings).expect("tau validated at construction")
    }

    /// Dense precision matrix via the Woodbury identity
    /// `(I + LL')^{-1} = I - L (I_k + L'L)^{-1} L'`.
    pub fn precision(&self) -> DMatrix<f64> {
        let l = self.loadings.matrix();
        let p = self.p();
        let mut inner = l.transpose() * l;
        for i in 0..inner.nrows() {
            inner[(i, i)] += 1.0;
        }
        let chol = nalgebra::Cholesky::new(inner).expect("I + L'L is always PD");
        let mut prec = DMatrix::identity(p, p) - l * chol.solve(&l.transpose());
        prec /= self.tau;
        symmetrize(&mut prec);
        prec
    }

    /// `log |tau (I_p + LL')|` without forming the dense matrix.
    pub fn log_det(&self) -> f64 {
        let l = self.loadings.matrix();
        let mut inner = l.transpose() * l;
        for i in 0..inner.nrows() {
            inner[(i, i)] += 1.0;
        }
        let chol = nalgebra::Cholesky::new(inner).expect("I + L'L is always PD");
        let cl = chol.l();
        let spike = 2.0 * (0..cl.nrows()).map(|i| cl[(i, i)].ln()).sum::<f64>();
        self.p() as f64 * self.tau.ln() + spike
    }
}

/// Eigenstructure of a spiked covariance: `U` holds left singular vectors of
/// `L`, `D` the squared singular values (decreasing), and `tau * (1 + D_j)`
/// are the leading eigenvalues of the assembled matrix.
pub fn spiked_eigen(cov: &SpikedCovariance) -> (DMatrix<f64>, DVector<f64>, f64) {
    let l = cov.loadings().matrix();
    let k = l.ncols();
    if k == 0 {
        return (DMatrix::zeros(l.nrows(), 0), DVector::zeros(0), cov.tau());
    }
    let svd = nalgebra::SVD::new(l.clone(), true, false);
    let mut u = svd.u.expect("u requested").columns(0, k).into_owned();
    let d = DVector::from_iterator(k, svd.singular_values.iter().take(k).map(|s| s * s));
    // deterministic sign: largest-magnitude entry of each column positive
    for j in 0..k {
        let col = u.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(j).neg_mut();
        }
    }
    (u, d, cov.tau())
}

/// Reduces an arbitrary full-column-rank matrix to the lower-echelon
/// representative of its Gram class: returns canonical `L` with
/// `L L' = M M'`, via an orthogonal right factor (`M = L O`) and column
/// sign fixing.
pub fn echelon_canonicalize(m: &DMatrix<f64>) -> Result<EchelonLoadings> {
    let (p, k) = m.shape();
    if k > p {
        return Err(Error::InvalidParameter(format!(
            "canonicalization needs k <= p, got {p}x{k}"
        )));
    }
    if k == 0 {
        return Ok(EchelonLoadings::empty(p));
    }
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[svd.singular_values.len() - 1];
    if !(smin > smax * RANK_TOL) {
        return Err(Error::DegenerateLoadings(format!(
            "matrix has numerical rank below {k} (smin/smax = {:e})",
            smin / smax.max(f64::MIN_POSITIVE)
        )));
    }
    Ok(echelon_factor(m))
}

/// The LQ-style echelon factor without the rank check; rank-deficient input
/// yields loadings whose trailing columns shrink toward zero.
pub(crate) fn echelon_factor(m: &DMatrix<f64>) -> EchelonLoadings {
    // Already echelon with nonnegative diagonal: exact fixed point.
    if let Ok(l) = EchelonLoadings::new(m.clone()) {
        if l.is_canonical() {
            return l;
        }
    }
    let qr = nalgebra::QR::new(m.transpose());
    let l = qr.r().transpose();
    EchelonLoadings { l }.canonicalized()
}

/// Parameters of the joint model: regression coefficient `beta = L alpha`,
/// conditional covariance `Sigma`, and the spiked predictor covariance.
#[derive(Debug, Clone)]
pub struct PcrParams {
    pub beta: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_x: SpikedCovariance,
    pub alpha: DMatrix<f64>,
}

impl PcrParams {
    /// Builds parameters with `beta = L alpha` exact by construction.
    pub fn from_loadings(
        loadings: EchelonLoadings,
        alpha: DMatrix<f64>,
        sigma: DMatrix<f64>,
        tau: f64,
    ) -> Result<Self> {
        if alpha.nrows() != loadings.k() {
            return Err(Error::InvalidParameter(format!(
                "alpha has {} rows, loadings have k = {}",
                alpha.nrows(),
                loadings.k()
            )));
        }
        if sigma.nrows() != sigma.ncols() || sigma.nrows() != alpha.ncols() {
            return Err(Error::InvalidParameter(
                "sigma must be square with one row per response".into(),
            ));
        }
        // Degenerate fits (e.g. OLS on interpolating data) sit on the PSD
        // boundary; only genuinely indefinite matrices are rejected.
        let (sig_eigs, _) = linalg::sym_eigen_desc(&sigma);
        let tol = sig_eigs[0].abs().max(f64::MIN_POSITIVE) * 1e-12;
        if sig_eigs[sig_eigs.len() - 1] < -tol {
            return Err(Error::InvalidParameter(
                "sigma must be positive semi-definite".into(),
            ));
        }
        let beta = loadings.matrix() * &alpha;
        let sigma_x = SpikedCovariance::new(tau, loadings)?;
        Ok(Self { beta, sigma, sigma_x, alpha })
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_semi_orthogonal, standard_normal_matrix, sym_eigen_desc};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn assemble_identity_when_k_zero() {
        let l = EchelonLoadings::empty(4);
        let cov = spiked_cov_assemble(1.0, &l).unwrap();
        assert_eq!(cov, DMatrix::identity(4, 4));
    }

    #[test]
    fn assemble_direct_expansion() {
        let l = EchelonLoadings::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let cov = spiked_cov_assemble(2.0, &l).unwrap();
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn assemble_eigenvalues_from_oracle() {
        // LL' has eigenvalues {25, 0}, so tau=1 gives {26, 1}.
        let l = EchelonLoadings::new(DMatrix::from_column_slice(2, 1, &[3.0, 4.0])).unwrap();
        let cov = spiked_cov_assemble(1.0, &l).unwrap();
        let (vals, _) = sym_eigen_desc(&cov);
        assert_relative_eq!(vals[0], 26.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn assemble_rejects_nonpositive_tau() {
        let l = EchelonLoadings::empty(2);
        assert!(matches!(
            spiked_cov_assemble(0.0, &l),
            Err(Error::InvalidParameter(_))
        ));
        assert!(spiked_cov_assemble(-1.0, &l).is_err());
    }

    #[test]
    fn spiked_eigen_svd_oracle() {
        let l = EchelonLoadings::new(DMatrix::from_column_slice(2, 1, &[3.0, 4.0])).unwrap();
        let cov = SpikedCovariance::new(1.0, l).unwrap();
        let (u, d, tau) = spiked_eigen(&cov);
        assert_relative_eq!(u[(0, 0)], 0.6, epsilon = 1e-12);
        assert_relative_eq!(u[(1, 0)], 0.8, epsilon = 1e-12);
        assert_relative_eq!(d[0], 25.0, epsilon = 1e-12);
        assert_relative_eq!(tau * (1.0 + d[0]), 26.0, epsilon = 1e-12);
    }

    #[test]
    fn spiked_eigen_empty() {
        let cov = SpikedCovariance::new(1.5, EchelonLoadings::empty(3)).unwrap();
        let (u, d, tau) = spiked_eigen(&cov);
        assert_eq!(u.ncols(), 0);
        assert_eq!(d.len(), 0);
        assert_eq!(tau, 1.5);
        let (vals, _) = sym_eigen_desc(&cov.assemble());
        for v in vals.iter() {
            assert_relative_eq!(*v, 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn spiked_eigen_reassembly_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let m = standard_normal_matrix(&mut rng, 6, 2);
            let l = echelon_canonicalize(&m).unwrap();
            let tau = 0.7;
            let cov = SpikedCovariance::new(tau, l.clone()).unwrap();
            let (u, d, _) = spiked_eigen(&cov);
            let rebuilt = (DMatrix::identity(6, 6) + &u * DMatrix::from_diagonal(&d) * u.transpose()) * tau;
            let direct = cov.assemble();
            assert_relative_eq!(rebuilt, direct, epsilon = 1e-12 * direct.norm());
        }
    }

    #[test]
    fn trailing_eigenvalues_equal_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = standard_normal_matrix(&mut rng, 7, 3);
        let cov = SpikedCovariance::new(2.3, echelon_canonicalize(&m).unwrap()).unwrap();
        let (vals, _) = sym_eigen_desc(&cov.assemble());
        for j in 3..7 {
            assert_relative_eq!(vals[j], 2.3, epsilon = 1e-10 * 2.3);
        }
    }

    #[test]
    fn canonicalize_fixed_point() {
        let m = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, -1.0, 3.0, 0.5, 4.0]);
        let l = echelon_canonicalize(&m).unwrap();
        assert_eq!(l.matrix(), &m);
    }

    #[test]
    fn canonicalize_flips_signs() {
        let m = DMatrix::from_column_slice(2, 1, &[-3.0, -4.0]);
        let l = echelon_canonicalize(&m).unwrap();
        assert_relative_eq!(l.matrix()[(0, 0)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(l.matrix()[(1, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn canonicalize_preserves_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let m = standard_normal_matrix(&mut rng, 5, 2);
            let l = echelon_canonicalize(&m).unwrap();
            let gram_l = l.matrix() * l.matrix().transpose();
            let gram_m = &m * m.transpose();
            assert!((gram_l - &gram_m).norm() <= 1e-10 * gram_m.norm());
            assert!(l.is_canonical());
        }
    }

    #[test]
    fn canonicalize_rejects_rank_deficient() {
        let mut m = DMatrix::zeros(4, 2);
        m.set_column(0, &DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]));
        m.set_column(1, &DVector::from_column_slice(&[2.0, 4.0, 6.0, 8.0]));
        assert!(matches!(
            echelon_canonicalize(&m),
            Err(Error::DegenerateLoadings(_))
        ));
    }

    #[test]
    fn canonicalize_invariant_under_right_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let m = standard_normal_matrix(&mut rng, 6, 3);
            let l = echelon_canonicalize(&m).unwrap();
            let o = haar_semi_orthogonal(&mut rng, 3, 3);
            let rotated = l.matrix() * &o;
            let l2 = echelon_canonicalize(&rotated).unwrap();
            assert!((l.matrix() - l2.matrix()).norm() <= 1e-8 * l.matrix().norm().max(1.0));
        }
    }

    #[test]
    fn echelon_pattern_is_enforced() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 2.0, 3.0]);
        assert!(EchelonLoadings::new(bad).is_err());
        let good = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 3.0]);
        assert!(EchelonLoadings::new(good).is_ok());
    }

    #[test]
    fn free_vec_round_trip() {
        let l = EchelonLoadings::new(DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 0.0, 2.0, 4.0, 3.0, 5.0],
        ))
        .unwrap();
        let v = l.to_free_vec();
        assert_eq!(v.len(), 5);
        let back = EchelonLoadings::from_free_vec(3, 2, &v);
        assert_eq!(back, l);
    }

    #[test]
    fn zero_column_unchanged_by_canonical_form() {
        let mut l = DMatrix::zeros(4, 2);
        l[(0, 0)] = -1.0;
        l[(2, 0)] = 2.0;
        let loadings = EchelonLoadings::new(l).unwrap();
        let canon = loadings.canonicalized();
        assert_eq!(canon.matrix().column(1).norm(), 0.0);
        assert!(canon.matrix()[(0, 0)] > 0.0);
    }

    #[test]
    fn dataset_validates_shapes() {
        let y = DMatrix::zeros(5, 1);
        let x = DMatrix::zeros(4, 2);
        assert!(Dataset::new(y, x).is_err());
    }

    #[test]
    fn dataset_checks_centering_with_metadata() {
        let y = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let x = DMatrix::from_column_slice(2, 1, &[2.0, -2.0]);
        let prep = Preprocessing::identity(1, 1);
        assert!(Dataset::with_preprocessing(y, x, prep.clone()).is_ok());
        let y_off = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let x2 = DMatrix::from_column_slice(2, 1, &[2.0, -2.0]);
        assert!(Dataset::with_preprocessing(y_off, x2, prep).is_err());
    }

    #[test]
    fn precision_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = standard_normal_matrix(&mut rng, 5, 2);
        let cov = SpikedCovariance::new(0.9, echelon_canonicalize(&m).unwrap()).unwrap();
        let dense = cov.assemble();
        let prec = cov.precision();
        assert_relative_eq!(&dense * &prec, DMatrix::identity(5, 5), epsilon = 1e-10);
        let logdet = crate::linalg::spd_log_det(&dense, "cov").unwrap();
        assert_relative_eq!(cov.log_det(), logdet, epsilon = 1e-10);
    }
}
