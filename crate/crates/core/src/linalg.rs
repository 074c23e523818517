//! Small wrappers around nalgebra for the complex Hermitian kernels the
//! sensing chain leans on: eigendecomposition with a fixed ordering and
//! positive-definite solves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Maximum `|R - Rᴴ|` entry accepted before a matrix is rejected as
/// non-Hermitian. Covariance construction is `H Hᴴ`, so asymmetry beyond
/// rounding indicates a logic error upstream.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Largest absolute asymmetry `max |R[i,j] - conj(R[j,i])|`.
pub fn max_asymmetry(r: &DMatrix<Complex64>) -> f64 {
    let n = r.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (r[(i, j)] - r[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Force exact Hermitian symmetry: `(R + Rᴴ)/2`.
pub fn hermitianize(r: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (r + r.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order and eigenvectors as matching columns.
pub struct HermitianEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Decompose a Hermitian matrix. The input is symmetrized first so callers
/// may pass `H Hᴴ` products carrying rounding-level asymmetry; anything
/// beyond [`HERMITIAN_TOL`] relative to the largest entry is an error.
pub fn hermitian_eig(r: &DMatrix<Complex64>) -> Result<HermitianEig> {
    if r.nrows() != r.ncols() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let scale = r.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1.0);
    let asym = max_asymmetry(r);
    if asym > HERMITIAN_TOL * scale.max(1.0) * 1e3 {
        return Err(Error::InvalidParameter(format!(
            "matrix is not Hermitian (asymmetry {asym:.3e})"
        )));
    }
    let sym = hermitianize(r);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig { values, vectors })
}

/// Solve `R x = b` for Hermitian positive-definite `R` (diagonal loading
/// upstream guarantees definiteness). Falls back to LU when the Cholesky
/// factorization fails numerically.
pub fn solve_hpd(r: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if r.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "solve: matrix is {}x{} but rhs has {} entries",
            r.nrows(),
            r.ncols(),
            b.len()
        )));
    }
    let x = match r.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => r
            .clone()
            .lu()
            .solve(b)
            .ok_or_else(|| Error::IllConditioned("covariance solve failed".into()))?,
    };
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::IllConditioned(
            "covariance solve produced non-finite values".into(),
        ));
    }
    Ok(x)
}

/// Condition number estimate of a small Hermitian matrix via its
/// eigenvalue spread.
pub fn hermitian_condition(r: &DMatrix<Complex64>) -> Result<f64> {
    let eig = hermitian_eig(r)?;
    let max = eig.values[0].abs();
    let min = eig.values[eig.values.len() - 1].abs();
    if min == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}
