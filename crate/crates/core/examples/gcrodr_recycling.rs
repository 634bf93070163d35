//! GCRO-DR on a slowly drifting sequence of linear systems, with and
//! without a recycled subspace.

use param_lyap::gcrodr::{gcrodr_solve, GcroDrOptions};
use param_lyap::{CMat, CVec, C64};

fn system(n: usize, shift: f64) -> (CMat, CVec) {
    // a few eigenvalues near the origin, the rest in [1, 2]
    let a = CMat::from_fn(n, n, |i, j| {
        if i == j {
            let d = if i < 6 { 0.01 * (i + 1) as f64 } else { 1.0 + i as f64 / n as f64 };
            C64::new(d + shift, 0.0)
        } else if i + 1 == j {
            C64::new(0.3, 0.0)
        } else if j == i + 7 || i == j + 3 {
            C64::new(0.0, 0.1)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let b = CVec::from_fn(n, |i, _| C64::new((i as f64 * 0.37).sin(), 0.0));
    (a, b)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 300;
    for s in [0, 10] {
        let opts = GcroDrOptions { tol: 1e-10, maxit: 3000, restart: 30, recycle: s };
        let mut space = None;
        let mut total = 0;
        for k in 0..10 {
            let (a, b) = system(n, 0.001 * k as f64);
            let out = gcrodr_solve(&a, None, &b, None, &opts, space.take()).map_err(|f| f.error)?;
            total += out.stats.iterations;
            space = out.recycle;
        }
        println!("recycle dimension {s:>2}: {total} iterations over 10 systems");
    }
    Ok(())
}
