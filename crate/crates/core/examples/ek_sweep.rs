//! Extended Krylov projection over a parameter grid. One basis serves the
//! whole grid; it grows only when a parameter misses the tolerance.

use param_lyap::bench::synthetic_problem;
use param_lyap::ek::{ek_sweep, EkOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pb = synthetic_problem(400, 2, &mut rng)?;
    let mut grid = vec![];
    for a in [0.05, 0.1, 0.2, 0.4] {
        for b in [-0.3, -0.1, 0.1, 0.3] {
            grid.push(vec![a, b]);
        }
    }
    let opts = EkOptions { eps: 1e-8, ..Default::default() };
    let report = ek_sweep(&pb, &grid, None, opts)?;
    for r in &report.records {
        println!(
            "v = {:>5.2} {:>5.2}  trace {:.8e}  backward error {:.1e}  dim {:>3}  expansions {}  {:?}",
            r.v[0],
            r.v[1],
            r.f_value.unwrap_or(f64::NAN),
            r.backward_error,
            r.basis_dim,
            r.expansions,
            r.status
        );
    }
    println!("{} expansions in total, final dimension {} of n = {}", report.total_expansions, report.final_dim, pb.n());
    Ok(())
}
