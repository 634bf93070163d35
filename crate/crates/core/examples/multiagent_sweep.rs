//! H2 sweep of a 4x4 grid consensus network when one agent's coupling block is
//! perturbed.

use param_lyap::multiagent::*;
use param_lyap::vibration::{Backend, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = 16;
    let net = assemble_network(&grid_laplacian(4, 4)?, &AgentSet::example(m))?;
    let axis = desk_axis();
    let spec = SweepSpec {
        family: Family::SingleAgent,
        kset: vec![1, 5, 9, 13],
        grid: cartesian(&[axis.clone(), axis.clone(), axis]),
        disturbance: Disturbance::Perturbed,
        output_agents: None,
    };
    let mut settings = SolverSettings::default();
    settings.smw.pbar = 5;
    settings.smw.gcrodr.tol = 1e-8;

    let sweep = sweep_grid(&net, &spec, Backend::Smw, &settings)?;
    println!("{} stable, {} unstable, {} failed", sweep.stable, sweep.unstable, sweep.failed);
    for km in &sweep.maxima {
        println!("agent {:>2}: max H2^2 = {:.6e} at v = {:?}", km.k, km.h2_sq, km.v);
    }
    Ok(())
}
