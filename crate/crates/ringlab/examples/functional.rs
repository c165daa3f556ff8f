//! Coercivity of the energy/Morawetz functional on random errors satisfying the
//! orthogonality conditions.
//!
//! ```text
//! cargo run --release --example functional -- [samples] [seed]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringlab::decomp::{energy_morawetz_i, random_orthogonal_error};
use ringlab::groundstate::{eval_groundstate, make_params};
use ringlab::modode::{integrate_exact, OdeOptions, Polynomials};
use ringlab::nlsim::{RadialGrid, RadialSolver};
use ringlab::numerics::Grid1D;
use ringlab::profile::build_expansion;

fn main() -> ringlab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let samples = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let params = make_params(3, 3.0, None)?;
    let exp = build_expansion(&params, &eval_groundstate(&params, Grid1D::profile_default()))?;
    let traj = integrate_exact(&params, &Polynomials::from_expansion(&exp), &OdeOptions::default())?;
    let m = traj.at_s(100.0).rescaled(&params, traj.at_s(100.0).r);
    let grid = RadialGrid::new(4.0, 1 << 15)?;
    let solver = RadialSolver::for_params(grid, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ratios = Vec::with_capacity(samples);
    for i in 0..samples {
        let u = random_orthogonal_error(&exp, &m, grid, 1e-3, &mut rng)?;
        let r = energy_morawetz_i(&solver, &u, &m, &exp)?;
        if i < 5 {
            println!(
                "sample {i}: kinetic {:.4e} mass {:.4e} nonlinear {:.4e} morawetz {:+.4e} ratio {:.4}",
                r.kinetic, r.mass, r.nonlinear, r.morawetz, r.ratio
            );
        }
        ratios.push(r.ratio);
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    println!("{samples} samples at b = {:.3e}: ratio in [{lo:.4}, {hi:.4}]", m.b);
    Ok(())
}
