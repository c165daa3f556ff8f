//! Kernel identities of the linearized operators and the constrained coercivity constant.
//!
//! ```text
//! cargo run --release --example linops
//! ```

use ringlab::groundstate::{eval_groundstate, make_params, TEST_MATRIX};
use ringlab::linops::LinearizedPair;
use ringlab::numerics::{Grid1D, RealField};

fn sup(f: &RealField) -> f64 {
    f.values[2..f.values.len() - 2].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn main() -> ringlab::Result<()> {
    println!(
        "{:>2} {:>4} {:>10} {:>10} {:>12} {:>12} {:>10} {:>10}",
        "N", "p", "L₋Q", "L₊Q'", "L₊ΛQ+2Q", "L₋(yQ)+2Q'", "min eig", "L₊ alone"
    );
    for (n, p) in TEST_MATRIX {
        let gs = eval_groundstate(&make_params(n, p, None)?, Grid1D::profile_default());
        let lp = LinearizedPair::new(&gs);
        let a = sup(&lp.apply_lminus(&gs.q)?);
        let b = sup(&lp.apply_lplus(&gs.qp)?);
        let c = sup(&lp.apply_lplus(&gs.lam_q)?.zip_with(&gs.q, |x, q| x + 2.0 * q));
        let d = sup(&lp.apply_lminus(&gs.y_q)?.zip_with(&gs.qp, |x, q| x + 2.0 * q));
        let coer = lp.coercivity()?;
        println!(
            "{n:>2} {p:>4} {a:>10.1e} {b:>10.1e} {c:>12.1e} {d:>12.1e} {:>10.6} {:>10.6}",
            coer.min_eig,
            lp.lplus_unconstrained_min()?
        );
    }
    Ok(())
}
