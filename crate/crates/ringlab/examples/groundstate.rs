//! Ground-state identities across the test matrix.
//!
//! ```text
//! cargo run --release --example groundstate
//! ```

use ringlab::groundstate::{check_identities, eval_groundstate, make_params, TEST_MATRIX};
use ringlab::numerics::Grid1D;

fn main() -> ringlab::Result<()> {
    println!(
        "{:>2} {:>4} {:>8} {:>8} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "N", "p", "alpha", "beta", "∫Q²", "∫Q'²", "(Q,ΛQ)", "Pohozaev", "ΛQ"
    );
    for (n, p) in TEST_MATRIX {
        let params = make_params(n, p, None)?;
        let gs = eval_groundstate(&params, Grid1D::profile_default());
        let r = check_identities(&gs);
        println!(
            "{n:>2} {p:>4} {:>8.5} {:>8.5} {:>12.9} {:>12.9} {:>12.9} {:>10.1e} {:>10.1e}",
            params.alpha, params.beta_inf, r.int_q2, r.int_qp2, r.q_lam_q, r.pohozaev_defect, r.lam_q_defect
        );
    }
    Ok(())
}
