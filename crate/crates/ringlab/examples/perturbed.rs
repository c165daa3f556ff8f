//! Forces the modulation equations by `b^k` and measures how fast the forced solution
//! approaches the exact one backward in time.
//!
//! ```text
//! cargo run --release --example perturbed -- [random-seed]
//! ```

use ringlab::groundstate::{eval_groundstate, make_params};
use ringlab::modode::{integrate_exact, integrate_perturbed, to_physical_time, ForcingMode, OdeOptions, Polynomials};
use ringlab::numerics::Grid1D;
use ringlab::profile::build_expansion;

fn main() -> ringlab::Result<()> {
    let mode = std::env::args().nth(1).and_then(|s| s.parse().ok()).map_or(ForcingMode::Uniform, ForcingMode::Random);
    let params = make_params(3, 3.0, None)?;
    let exp = build_expansion(&params, &eval_groundstate(&params, Grid1D::profile_default()))?;
    let polys = Polynomials::from_expansion(&exp);
    let traj = to_physical_time(&integrate_exact(&params, &polys, &OdeOptions::default())?)?;
    let run = integrate_perturbed(&params, &polys, &traj, 1.0, traj.at_s(1e6).t, traj.at_s(1e3).t, mode)?;

    println!("{:>12} {:>12} {:>12} {:>12} {:>12}", "|t|", "Δb", "Δβ̃", "Δg", "Δγ");
    for i in (0..run.abs_t.len()).step_by(run.abs_t.len() / 12 + 1) {
        println!("{:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}", run.abs_t[i], run.db[i], run.dbtilde[i], run.dg[i], run.dgamma[i]);
    }
    if let Some(f) = run.fit {
        println!("difference exponent {:.4} (predicted {:.4})", f.exponent, run.predicted);
    }
    if let Some(f) = run.gamma_fit {
        println!("phase exponent {:.4} (bound {:.4})", f.exponent, run.predicted_gamma);
    }
    Ok(())
}
