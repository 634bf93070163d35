//! Rayleigh-damped seed: closed-form eigenvalues and seed solution.

use param_lyap::dense::{eig_general, lyap_residual};
use param_lyap::vibration::*;
use param_lyap::C64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = VibSpec::standard(10, 3, 4, 15);
    let (m, k) = build_mass_spring(&spec)?;
    let b = damper_geometry(&spec)?;
    let model = build_rayleigh_model(&m, &k, &b, 0.05, 0.01)?;

    println!("seed residual {:.2e}", lyap_residual(&model.a0, &model.x0, &model.q));
    let numeric = eig_general(&model.a0.map(|x| C64::new(x, 0.0)))?;
    let mut closed: Vec<_> = model.eigs.clone();
    let mut num: Vec<_> = numeric.values.to_vec();
    for e in [&mut closed, &mut num] {
        e.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    }
    println!("{:>28} {:>28}", "closed form", "numerical");
    for (a, b) in closed.iter().zip(&num).take(6) {
        println!("{:>13.6} {:>+13.6}i {:>13.6} {:>+13.6}i", a.re, a.im, b.re, b.im);
    }

    let pb = model.problem();
    let v = [5.0, 5.0, 5.0];
    println!("energy at v = {v:?}: {:.6e}", pb.solve_dense(&v)?.trace());
    Ok(())
}
