use crate::{LyapError, RMat, RVec, Result};

/// Mass-normalized modes: `Phi^T K Phi = diag(omega)^2`, `Phi^T M Phi = I`,
/// frequencies ascending.
#[derive(Clone, Debug)]
pub struct ModalPair {
    pub omega: RVec,
    pub phi: RMat,
}

/// Generalized symmetric eigenproblem `K phi = w^2 M phi` via the Cholesky
/// factor of `M`.
pub fn generalized_modal(k: &RMat, m: &RMat) -> Result<ModalPair> {
    let n = k.nrows();
    if k.shape() != (n, n) || m.shape() != (n, n) {
        return Err(LyapError::DimensionMismatch(format!("K is {:?}, M is {:?}", k.shape(), m.shape())));
    }
    let chol = m.clone().cholesky().ok_or(LyapError::NotSpd)?;
    let l = chol.l();
    // C = L^{-1} K L^{-T}
    let linv_k = l.solve_lower_triangular(k).ok_or(LyapError::NotSpd)?;
    let c = l.solve_lower_triangular(&linv_k.transpose()).ok_or(LyapError::NotSpd)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let scale = eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut omega = RVec::zeros(n);
    let mut w = RMat::zeros(n, n);
    for (c_idx, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i];
        if lam <= 1e-14 * scale {
            return Err(LyapError::NotSpd);
        }
        omega[c_idx] = lam.sqrt();
        w.set_column(c_idx, &eig.eigenvectors.column(i));
    }
    let phi = l.transpose().solve_upper_triangular(&w).ok_or(LyapError::NotSpd)?;
    Ok(ModalPair { omega, phi })
}
