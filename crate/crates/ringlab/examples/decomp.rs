//! Decomposes a modulated ansatz back into its parameters, then perturbs it and checks the
//! linear response.
//!
//! ```text
//! cargo run --release --example decomp
//! ```

use num_complex::Complex64;
use ringlab::decomp::{ansatz_field, decompose, determinant_limit, jacobian_determinant, modulated_state};
use ringlab::groundstate::{eval_groundstate, make_params, TEST_MATRIX};
use ringlab::modode::ModState;
use ringlab::nlsim::{RadialGrid, WaveField};
use ringlab::numerics::Grid1D;
use ringlab::profile::build_expansion;

fn main() -> ringlab::Result<()> {
    for (n, p) in TEST_MATRIX {
        let params = make_params(n, p, None)?;
        let exp = build_expansion(&params, &eval_groundstate(&params, Grid1D::profile_default()))?;
        let d = jacobian_determinant(&exp, 1e-4, 0.0)?;
        println!("({n},{p}): det = {d:.6} (limit {:.6})", determinant_limit(p));
    }

    let params = make_params(3, 3.0, None)?;
    let exp = build_expansion(&params, &eval_groundstate(&params, Grid1D::profile_default()))?;
    let m = modulated_state(&params, 0.1, 1.0, 0.3, 0.0, 0.0, 0.0);
    let grid = RadialGrid::new(4.0, (1 << 14) + 1)?;
    let f = ansatz_field(&exp, &m, grid);
    let guess = ModState { lambda: 0.101, r: 1.002, gamma: 0.31, btilde: 1e-3, ..m };
    let d = decompose(&f, &guess, &exp)?;
    let a = d.modulation;
    println!("\nrecovered λ {:.12} r {:.12} γ {:.12} β̃ {:.2e} in {} iterations", a.lambda, a.r, a.gamma, a.btilde, d.newton_iters);
    println!("‖ε‖ = {:.2e}, orthogonality residuals {:?}", d.eps_h1mu, d.ortho_residuals);

    let amp = m.lambda.powf(-params.amp_exp());
    for size in [1e-4, 1e-3, 1e-2] {
        let g = WaveField {
            u: f.u
                .iter()
                .enumerate()
                .map(|(i, z)| z + size * amp * Complex64::new(1.0, 0.5) * (-(grid.node(i) - 1.03f64).powi(2) / 3.2e-3).exp())
                .collect(),
            ..f.clone()
        };
        let b = decompose(&g, &m, &exp)?.modulation;
        println!(
            "bump {size:.0e}: Δλ/λ {:+.4e}  Δr/λ {:+.4e}  Δγ {:+.4e}  Δβ̃ {:+.4e}",
            (b.lambda - m.lambda) / m.lambda / size,
            (b.r - m.r) / m.lambda / size,
            (b.gamma - m.gamma) / size,
            (b.btilde - m.btilde) / size
        );
    }
    Ok(())
}
