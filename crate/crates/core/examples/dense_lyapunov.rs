//! Dense reference solve of `A X + X A^T = -Q`.

use param_lyap::bench::synthetic_problem;
use param_lyap::dense::{lyap_residual, solve_lyap_dense, spectral_abscissa};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pb = synthetic_problem(120, 2, &mut rng)?;
    println!("n = {}, spectral abscissa of A0 = {:.4}", pb.n(), spectral_abscissa(&pb.a0)?);

    let x = solve_lyap_dense(&pb.a0, &pb.q)?;
    println!("trace X = {:.6e}, relative residual = {:.2e}", x.trace(), lyap_residual(&pb.a0, &x, &pb.q));

    // the same solve for a perturbed matrix A(v) = A0 - Bl diag(v) Br^T
    let v = [0.3, -0.2];
    let xv = pb.solve_dense(&v)?;
    println!("trace X(v) = {:.6e} at v = {v:?}", xv.trace());
    Ok(())
}
