//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative threshold below which singular/eigenvalues are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order
/// and eigenvector columns reordered to match.
pub fn sym_eigen_desc(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = nalgebra::SymmetricEigen::new(mat.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix, treating
/// eigenvalues below `RANK_TOL` times the largest as zero.
pub fn pinv_sym(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let k = mat.nrows();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (values, vectors) = sym_eigen_desc(mat);
    let cutoff = values[0].abs() * RANK_TOL;
    let inv = DVector::from_iterator(
        k,
        values.iter().map(|&v| if v.abs() > cutoff { 1.0 / v } else { 0.0 }),
    );
    &vectors * DMatrix::from_diagonal(&inv) * vectors.transpose()
}

/// Numerical rank of a symmetric PSD matrix from its sorted eigenvalues.
pub fn rank_from_eigenvalues(values: &DVector<f64>, rel_tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let cutoff = values[0].abs().max(f64::MIN_POSITIVE) * rel_tol;
    values.iter().filter(|v| v.abs() > cutoff).count()
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
/// Fails when the matrix is not PD.
pub fn spd_log_det(mat: &DMatrix<f64>, what: &str) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(mat.clone())
        .ok_or_else(|| Error::InvalidParameter(format!("{what} is not positive definite")))?;
    let l = chol.l();
    Ok(2.0 * (0..mat.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// `n x p` matrix with independent standard normal entries.
pub fn standard_normal_matrix<R: Rng>(rng: &mut R, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed semi-orthogonal `p x k` matrix: QR of a Gaussian matrix
/// with the sign of each R diagonal entry folded into the corresponding
/// Q column.
pub fn haar_semi_orthogonal<R: Rng>(rng: &mut R, p: usize, k: usize) -> DMatrix<f64> {
    assert!(k <= p, "haar_semi_orthogonal requires k <= p");
    if k == 0 {
        return DMatrix::zeros(p, 0);
    }
    let g = standard_normal_matrix(rng, p, k);
    let qr = nalgebra::QR::new(g);
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormal basis for the column space of `m`, with the numerical rank
/// determined from a column-pivoted QR.
pub fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = m.shape();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let qr = m.clone().col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let dmax = (0..r.nrows().min(r.ncols()))
        .map(|j| r[(j, j)].abs())
        .fold(0.0_f64, f64::max);
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&j| r[(j, j)].abs() > dmax * RANK_TOL && r[(j, j)] != 0.0)
        .count();
    q.columns(0, rank).into_owned()
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let svd = nalgebra::SVD::new(a.transpose() * b, false, false);
    let min_cos = svd
        .singular_values
        .iter()
        .fold(1.0_f64, |acc, &s| acc.min(s))
        .clamp(-1.0, 1.0);
    min_cos.acos()
}

/// Deterministically mixes a base seed with stream labels, SplitMix64 style.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
