//! Pair perturbations on the 200-agent benchmark topology.

use std::time::Instant;

use param_lyap::multiagent::*;
use param_lyap::vibration::{Backend, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = 200;
    let net = assemble_network(&laplacian_alg2(m)?, &AgentSet::example(m))?;
    let axis: Vec<f64> = pair_axis().into_iter().step_by(4).collect();
    let spec = SweepSpec {
        family: Family::Pair,
        kset: vec![PAIR_KSET_TEXT[0]],
        grid: cartesian(&[axis.clone(), axis]),
        disturbance: Disturbance::All,
        output_agents: None,
    };
    let mut settings = SolverSettings::default();
    settings.ek.eps = 1e-10;
    settings.ek.m_max = 200;
    settings.ek.smw.pbar = 5;
    settings.ek.smw.gcrodr.tol = 1e-8;

    let t = Instant::now();
    let sweep = sweep_grid(&net, &spec, Backend::Ek, &settings)?;
    println!("{} configurations: {} stable, {} unstable in {:.1} s", spec.grid.len(), sweep.stable, sweep.unstable, t.elapsed().as_secs_f64());
    for cell in sweep.cells.iter().filter(|c| c.stable).take(5) {
        let r = cell.record.as_ref().unwrap();
        println!("v = {:?}  H2^2 = {:.6e}  dim {}  backward error {:.1e}", cell.v, r.h2_sq, r.basis_dim, r.backward_error);
    }
    Ok(())
}
