//! Collapsing-ring simulation at N = 3, p = 3 from well-prepared data, followed by the
//! decomposition of snapshot triplets and the modulation defects.
//!
//! ```text
//! cargo run --release --example ring_blowup -- [n_r] [amplification]
//! ```

use ringlab::decomp::{decompose, initial_guess, mod_residuals};
use ringlab::groundstate::{eval_groundstate, make_params};
use ringlab::modode::{integrate_exact, to_physical_time, ModState, OdeOptions, Polynomials};
use ringlab::nlsim::{check_virial_bound, run_to_blowup, SimOptions};
use ringlab::numerics::Grid1D;
use ringlab::profile::build_expansion;
use std::time::Instant;

fn main() -> ringlab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n_r = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1usize << 18);
    let amplification = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30.0);
    let cfl = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05f64);
    let order = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
    let clock = Instant::now();

    let params = make_params(3, 3.0, None)?;
    let gs = eval_groundstate(&params, Grid1D::profile_default());
    let exp = build_expansion(&params, &gs)?;
    let traj = to_physical_time(&integrate_exact(&params, &Polynomials::from_expansion(&exp), &OdeOptions::default())?)?;
    let m = traj.at_s(100.0);
    let m = m.rescaled(&params, m.r);
    println!("start: λ = {:.4e}, r = {}, b = {:.4e}, t = {:.4e}", m.lambda, m.r, m.b, m.t);

    let opts = SimOptions {
        n_r,
        amplification,
        record_every: 10,
        snapshots: 16,
        snapshot_group: 3,
        snapshot_stride: (0.4 / cfl).round() as usize,
        cfl,
        order,
        ..SimOptions::default()
    };
    let run = run_to_blowup(&exp, &m, &opts)?;
    let rep = &run.report;
    println!(
        "{} steps, stop {:?}, amplification {:.2}, T ≈ {:.6e} ({:.1?})",
        rep.steps,
        rep.stop,
        rep.amplification,
        rep.t_est,
        clock.elapsed()
    );
    println!("‖∇u‖ exponent {:.4} (expected {:.4})", rep.rate.exponent, rep.expected[0]);
    println!("radius exponent {:.4} (expected {:.4})", rep.radius.exponent, rep.expected[1]);
    println!("scale exponent {:.4} (expected {:.4})", rep.scale.exponent, rep.expected[2]);
    println!("mass drift {:.2e}, energy drift {:.2e}", rep.mass_drift, rep.energy_drift);

    let ratio = check_virial_bound(&run.rows, rep.t_est, params.alpha)?;
    let tau_end = rep.t_est - run.rows.last().map_or(0.0, |r| r.t);
    let last_decade: Vec<f64> = ratio.iter().filter(|(t, _)| rep.t_est - t <= 10.0 * tau_end).map(|&(_, v)| v).collect();
    let (lo, hi) = last_decade.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    println!("virial ratio over the final decade: {lo:.4e} .. {hi:.4e} (spread {:.3})", hi / lo);

    println!("\n{:>12} {:>10} {:>10} {:>10} {:>10} {:>10}", "t", "λ", "b", "‖ε‖", "Mod", "bound");
    for group in run.snapshots.chunks(3).filter(|g| g.len() == 3) {
        let mut series: Vec<ModState> = Vec::new();
        let mut eps = 0.0;
        for f in group {
            let guess = series.last().map_or_else(|| initial_guess(f, &params), |p| ModState { t: f.t, ..*p });
            let d = decompose(f, &guess, &exp)?;
            eps = d.eps_h1mu;
            series.push(d.modulation);
        }
        let defects = mod_residuals(&series, &exp)?;
        let mid = &series[1];
        let bound = 10.0 * (mid.b * eps + mid.b.powi(params.k as i32));
        println!("{:>12.5e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}", mid.t, mid.lambda, mid.b, eps, defects[0].total, bound);
    }
    println!("\nelapsed {:.1?}", clock.elapsed());
    Ok(())
}
