//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse via SVD, discarding singular values below
/// `PINV_RTOL·σ_max`.
pub fn pinv(a: &CMatrix) -> CMatrix {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return CMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᴴ");
    let s_max = svd.singular_values.max();
    let cut = PINV_RTOL * s_max;
    let mut out = CMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= cut || s == 0.0 {
            continue;
        }
        let vi = v_t.row(i).adjoint();
        let ui = u.column(i).adjoint();
        out += (vi * ui) * Complex64::new(1.0 / s, 0.0);
    }
    out
}

/// 2-norm condition number `σ_max/σ_min` (infinite for rank-deficient input).
pub fn condition_number(a: &CMatrix) -> f64 {
    let s = a.clone().singular_values();
    let max = s.max();
    let min = s.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted descending.
pub fn hermitian_eig_desc(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    // symmetrize to suppress round-off asymmetry
    let herm = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a general square complex matrix.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}×{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    a.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::InvalidParameter("Schur decomposition did not converge".into()))
}

/// Least-squares solution of `A x = b` for each column of `b`.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> CMatrix {
    pinv(a) * b
}

/// Squared Frobenius norm.
pub fn fro2(a: &CMatrix) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}
