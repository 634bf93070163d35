//! Viscosity optimization of a damped mass-spring chain.
//!
//! `cargo run --example vibration_optimize -- [dense|smw|ek] [d]`

use std::time::Instant;

use param_lyap::vibration::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let backend: Backend = args.next().as_deref().unwrap_or("ek").parse()?;
    let d: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let (i1, i2) = reference_positions(RefCase::Small, d);
    let spec = VibSpec::standard(d, 5, i1[0], i2[0]);
    let model = build_vib_model(&spec)?;
    println!("{} masses, state dimension {}, dampers at {} and {}", spec.masses(), model.n(), spec.i1, spec.i2);

    let t = Instant::now();
    let mut eval = EnergyEvaluator::new(&model.problem(), backend, &SolverSettings::default())?;
    let run = optimize_viscosities(&mut eval, &[100.0, 100.0, 100.0], 1e-4)?;
    println!("{backend:?}: optimal viscosities {:.4?}", run.v);
    println!("energy {:.8e} after {} evaluations in {:.2} s", run.energy, run.evals, t.elapsed().as_secs_f64());
    println!("inner iterations {}, basis expansions {}", eval.total_inner_iters(), eval.total_expansions());
    Ok(())
}
