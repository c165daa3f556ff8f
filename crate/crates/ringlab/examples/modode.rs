//! Integrates the exact modulation equations and fits the physical-time blow-up laws.
//!
//! ```text
//! cargo run --release --example modode -- [N] [p]
//! ```

use ringlab::groundstate::{eval_groundstate, make_params};
use ringlab::modode::{integrate_exact, physical_exponents, to_physical_time, OdeOptions, Polynomials};
use ringlab::numerics::Grid1D;
use ringlab::profile::build_expansion;

fn main() -> ringlab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let p = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let params = make_params(n, p, None)?;
    let exp = build_expansion(&params, &eval_groundstate(&params, Grid1D::profile_default()))?;
    let traj = to_physical_time(&integrate_exact(&params, &Polynomials::from_expansion(&exp), &OdeOptions::default())?)?;

    println!("{:>10} {:>12} {:>12} {:>10} {:>12} {:>10}", "s", "t", "λ", "r", "b(1-α)s", "g");
    for m in traj.states.iter().step_by(40) {
        println!(
            "{:>10.3e} {:>12.4e} {:>12.4e} {:>10.4e} {:>12.9} {:>10.6}",
            m.s,
            m.t,
            m.lambda,
            m.r,
            m.b * (1.0 - params.alpha) * m.s,
            m.g
        );
    }
    let ex = physical_exponents(&params, &traj, 2.0)?;
    for (name, f, want) in [("λ", ex.lambda, ex.expected[0]), ("r", ex.r, ex.expected[1]), ("γ", ex.gamma, ex.expected[2])] {
        println!("{name}: exponent {:.6} (expected {want:.6})", f.exponent);
    }
    Ok(())
}
