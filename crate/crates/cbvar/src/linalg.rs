//! Small shared wrappers around nalgebra's Cholesky factorization. Every
//! solve and log-determinant in the crate goes through a Cholesky factor;
//! generic inverses are never formed.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Force exact symmetry, (m + m')/2; cheap hygiene after products that
/// are symmetric only up to rounding.
pub(crate) fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

#[derive(Debug)]
pub(crate) struct CholOutcome {
    pub chol: Cholesky<f64, Dyn>,
    /// Diagonal jitter that had to be added, if any.
    pub jitter: Option<f64>,
}

/// Factor a symmetric positive-definite matrix. On failure retries once
/// with diagonal jitter 1e-10 * trace/m, then gives up with the smallest
/// eigenvalue in the message.
pub(crate) fn chol_with_jitter(mat: &DMatrix<f64>, what: &str) -> Result<CholOutcome> {
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(CholOutcome { chol, jitter: None });
    }
    let m = mat.nrows() as f64;
    let eps = 1e-10 * mat.trace() / m;
    let mut bumped = mat.clone();
    for i in 0..mat.nrows() {
        bumped[(i, i)] += eps;
    }
    if let Some(chol) = Cholesky::new(bumped) {
        return Ok(CholOutcome { chol, jitter: Some(eps) });
    }
    Err(Error::numeric(format!(
        "{what} is not positive definite (smallest eigenvalue {:.3e}, jitter {eps:.3e} did not help)",
        min_symmetric_eigenvalue(mat)
    )))
}

/// Factor without the jitter fallback, for matrices that are positive
/// definite by construction.
pub(crate) fn chol_strict(mat: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(mat.clone()).ok_or_else(|| {
        Error::numeric(format!(
            "{what} is not positive definite (smallest eigenvalue {:.3e})",
            min_symmetric_eigenvalue(mat)
        ))
    })
}

/// log det of the factored matrix, from the factor's diagonal.
pub(crate) fn logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub(crate) fn min_symmetric_eigenvalue(mat: &DMatrix<f64>) -> f64 {
    symmetrized(mat)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Upper-triangular factor U with U U' equal to the inverse of the
/// factored matrix: U = (L^-1)'. Used as a sampling square root of an
/// inverse covariance without a second factorization.
pub(crate) fn inverse_factor(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let k = chol.l_dirty().nrows();
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .expect("Cholesky factor has positive diagonal");
    l_inv.transpose()
}
