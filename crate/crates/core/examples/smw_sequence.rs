//! Low-rank update solves along a parameter path, recycling the Krylov
//! space between neighbouring parameters.

use std::time::Instant;

use param_lyap::bench::synthetic_problem;
use param_lyap::smw::{SmwOffline, SmwOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pb = synthetic_problem(150, 3, &mut rng)?;

    let t = Instant::now();
    let off = SmwOffline::new(&pb, 50)?;
    println!("offline phase: {:.0} ms", t.elapsed().as_secs_f64() * 1e3);

    let opts = SmwOptions::default();
    let trace_cache = off.trace_cache(None);
    let mut recycle = None;
    for step in 0..8 {
        let s = 0.1 + 0.02 * step as f64;
        let v = [s, 0.5 * s, -s];
        let t = Instant::now();
        let (sol, next) = off.solve(&v, recycle.take(), &opts)?;
        recycle = next;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        let f = off.trace(&sol, &trace_cache);
        let dense = pb.solve_dense(&v)?.trace();
        println!(
            "v = [{:.2}, {:.2}, {:.2}]  trace {f:.8e}  rel err {:.1e}  {} iterations  {ms:.1} ms",
            v[0],
            v[1],
            v[2],
            (f - dense).abs() / dense.abs(),
            sol.stats.iterations
        );
    }
    Ok(())
}
