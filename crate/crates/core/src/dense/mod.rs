//! Dense linear algebra kernels used by the solvers.
//!
//! Storage and small factorizations use `nalgebra`; Schur forms, triangular
//! Sylvester solves and SVDs go to LAPACK. The functions add the
//! structure the solvers need (eigenvector matrices from a complex Schur
//! form, Cauchy kernels, a Bartels-Stewart Lyapunov solver, truncated SVD
//! factors and a deflating block QR).

mod eig;
mod factor;
mod lapack;
mod lyap;
mod modal;

pub use eig::{eig_general, EigDecomp};
pub use factor::{block_qr_deflate, orth_against, tsvd, BlockQr, LowRankFactors, LuFactors, OrthBlock};
pub use lapack::{gemm, gemv, Op};
pub use lyap::{lyap_residual, solve_lyap_dense};
pub use modal::{generalized_modal, ModalPair};

use crate::{CMat, LyapError, Result, C64};

/// Cauchy kernel `L[i][j] = 1 / (l_i + l_j)`.
///
/// Fails when some pair nearly cancels relative to the spectral radius.
pub fn cauchy_matrix(lambda: &[C64]) -> Result<CMat> {
    let n = lambda.len();
    let scale = lambda.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let thresh = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let s = lambda[i] + lambda[j];
            if s.norm() < thresh {
                return Err(LyapError::NearSingularPair { i, j, value: s.norm() });
            }
            out[(i, j)] = s.inv();
        }
    }
    Ok(out)
}

/// Largest eigenvalue of the symmetric part `(A + A^T) / 2`.
pub fn log_norm(a: &crate::RMat) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Largest real part of the eigenvalues of `a`.
///
/// Exactly symmetric input goes through the symmetric eigensolver, anything
/// else through the complex Schur form.
pub fn spectral_abscissa(a: &crate::RMat) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(LyapError::DimensionMismatch(format!("square matrix expected, got {:?}", a.shape())));
    }
    if a == &a.transpose() {
        return Ok(a.clone().symmetric_eigenvalues().max());
    }
    let (_, t) = lapack::schur(&crate::to_complex(a))?;
    Ok(t.diagonal().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}
