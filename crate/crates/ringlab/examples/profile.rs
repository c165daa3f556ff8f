//! Builds the ring profile expansion, prints its solvability constants and the residual order.
//!
//! ```text
//! cargo run --release --example profile -- [N] [p] [k]
//! ```

use ringlab::fit::power_law_fit;
use ringlab::groundstate::{eval_groundstate, make_params};
use ringlab::numerics::Grid1D;
use ringlab::profile::{build_expansion, residual_psi_with, ResidualOptions};

fn main() -> ringlab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let p = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let k = args.get(3).and_then(|s| s.parse().ok());
    let params = make_params(n, p, k)?;
    let exp = build_expansion(&params, &eval_groundstate(&params, Grid1D::profile_default()))?;
    println!("N = {n}, p = {p}, alpha = {:.5}, k = {}, degree {}", params.alpha, params.k, exp.degree);
    println!("{:>3} {:>3} {:>16} {:>16} {:>12}", "j", "l", "c1", "c2", "decay");
    for (&(j, l), &c1) in &exp.c1 {
        println!("{j:>3} {l:>3} {c1:>16.9e} {:>16.9e} {:>12.4e}", exp.c2(j, l), exp.decay_constant(j, l, (20.0, 55.0)));
    }

    let bs: Vec<f64> = (0..7).map(|i| 1e-3 * 10f64.powf(0.25 * i as f64)).collect();
    let mut norms = Vec::new();
    for &b in &bs {
        let (_, uncut) = residual_psi_with(&exp, b, 0.0, ResidualOptions { cutoff: false })?;
        let (_, cut) = residual_psi_with(&exp, b, 0.0, ResidualOptions { cutoff: true })?;
        println!("b = {b:.3e}: ‖Ψ‖ = {uncut:.3e} (with cutoff {cut:.3e})");
        norms.push(uncut);
    }
    let fit = power_law_fit(&bs, &norms, (bs[0], bs[6]))?;
    println!("residual slope {:.4} ± {:.1e}", fit.exponent, fit.stderr);
    Ok(())
}
