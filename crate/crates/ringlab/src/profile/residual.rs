//! Cutoff, assembly of `Q_{b,β̃}` and the residual `Ψ_{b,β̃}`.

use num_complex::{Complex, Complex64};

use super::build::pow_dd;
use super::ProfileExpansion;
use crate::dd::{cdd_to_c64, cscale, Cdd, Dd};
use crate::error::{Error, Result};
use crate::numerics::{h1mu_norm, ComplexField, Grid1D, RealField, WeightSpec};

/// Smooth step: 0 for `y ≤ −2`, 1 for `y ≥ −1`, with its first two derivatives.
pub fn zeta(y: f64) -> (f64, f64, f64) {
    if y <= -2.0 {
        return (0.0, 0.0, 0.0);
    }
    if y >= -1.0 {
        return (1.0, 0.0, 0.0);
    }
    let phi = 1.0 / (1.0 + y) + 1.0 / (y + 2.0);
    let d1 = -1.0 / (1.0 + y).powi(2) - 1.0 / (y + 2.0).powi(2);
    let d2 = 2.0 / (1.0 + y).powi(3) + 2.0 / (y + 2.0).powi(3);
    let z = if phi > 0.0 { (-phi).exp() / (1.0 + (-phi).exp()) } else { 1.0 / (1.0 + phi.exp()) };
    let s = 1.0 / ((phi / 2.0).exp() + (-phi / 2.0).exp()).powi(2);
    let z1 = -s * d1;
    let z2 = -(z1 * (1.0 - 2.0 * z) * d1 + s * d2);
    (z, z1, z2)
}

/// `ζ_b(y) = ζ(√b y)` on a grid.
pub fn cutoff_zeta(b: f64, grid: Grid1D) -> Result<RealField> {
    if !(b > 0.0) {
        return Err(Error::Input(format!("cutoff needs b > 0, got {b}")));
    }
    let sb = b.sqrt();
    Ok(RealField::from_fn(grid, |y| zeta(sb * y).0))
}

fn check_b(b: f64, bt: f64) -> Result<()> {
    if !(b > 0.0 && b < 0.5) || !bt.is_finite() {
        return Err(Error::Input(format!("b = {b} outside (0, 0.5)")));
    }
    Ok(())
}

/// `ζ_b P_{b,β̃} e^{−iβy−iby²/4}` on the expansion grid, or interpolated onto `grid`.
pub fn assemble_qb(exp: &ProfileExpansion, b: f64, bt: f64, grid: Grid1D) -> Result<ComplexField> {
    check_b(b, bt)?;
    let beta = exp.params.beta_inf + bt;
    let sb = b.sqrt();
    if grid.same_as(&exp.grid()) {
        let p = exp.pser.eval(Dd::new(b), Dd::new(bt));
        let values = grid
            .nodes()
            .into_iter()
            .zip(&p)
            .map(|(y, &v)| cdd_to_c64(v) * zeta(sb * y).0 * Complex64::from_polar(1.0, -beta * y - b * y * y / 4.0))
            .collect();
        return ComplexField::new(grid, values);
    }
    let frozen = super::ProfileSampler::new(exp).freeze(b, bt);
    Ok(ComplexField::from_fn(grid, |y| frozen.qb(y)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualOptions {
    /// Multiply by the cutoff `ζ_b` before evaluating the equation.
    pub cutoff: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions { cutoff: true }
    }
}

pub fn residual_psi(exp: &ProfileExpansion, b: f64, bt: f64) -> Result<(ComplexField, f64)> {
    residual_psi_with(exp, b, bt, ResidualOptions::default())
}

/// Pointwise `Ψ_{b,β̃}` (no series truncation) and its `H¹_μ` norm.
pub fn residual_psi_with(exp: &ProfileExpansion, b: f64, bt: f64, opts: ResidualOptions) -> Result<(ComplexField, f64)> {
    check_b(b, bt)?;
    let pr = &exp.params;
    let grid = exp.grid();
    let core = super::build::Core::new(pr, grid);
    let (bd, btd) = (Dd::new(b), Dd::new(bt));
    let ps = &exp.pser;
    let p = ps.eval(bd, btd);
    let p1s = core.d1(ps).eval(bd, btd);
    let p2s = core.d2(ps).eval(bd, btd);
    let pb = ps.d_b().eval(bd, btd);
    let pt = ps.d_bt().eval(bd, btd);
    let pv1 = exp.p1.eval(bd, btd);
    let pv2 = exp.p2.eval(bd, btd);
    let beta = Dd::new(pr.beta_inf) + btd;
    let alpha = Dd::new(pr.alpha);
    let tau = -(Dd::ONE - alpha) * bd * bd + bd / beta * pv2 + bd * pv1;
    let a = alpha * bd / (Dd::new(2.0) * beta);
    let nm1 = Dd::new((pr.n_dim - 1) as f64);
    let lam_c = Dd::new(2.0 / (pr.p - 1.0));
    let half_exp = (pr.p - 1.0) / 2.0;
    let sb = b.sqrt();
    let mul_i = |z: Cdd| Complex::new(-z.im, z.re);

    let mut out = Vec::with_capacity(grid.n);
    for (i, y) in grid.nodes().into_iter().enumerate() {
        let yd = Dd::new(y);
        let (z0, z1, z2, zb) = if opts.cutoff {
            let (z0, z1, z2) = zeta(sb * y);
            (Dd::new(z0), Dd::new(sb * z1), Dd::new(b * z2), Dd::new(y / (2.0 * sb) * z1))
        } else {
            (Dd::ONE, Dd::ZERO, Dd::ZERO, Dd::ZERO)
        };
        let (pp, p1, p2) = (p[i], p1s[i], p2s[i]);
        let zp = cscale(pp, z0);
        let phi = beta + bd * yd * Dd::new(0.5);
        let aa = cscale(pp, z1) + cscale(p1, z0);
        let dy = aa + cscale(mul_i(zp), -phi);
        let dyy = cscale(pp, z2)
            + cscale(p1, z1 * Dd::new(2.0))
            + cscale(p2, z0)
            + cscale(mul_i(aa), -(phi * Dd::new(2.0)))
            + cscale(zp, -(phi * phi))
            + cscale(mul_i(zp), -(bd * Dd::new(0.5)));
        let base = Dd::ONE + a * yd;
        let pot = if base.hi > 0.0 { nm1 * a / base } else { Dd::ZERO };
        let r2 = zp.re * zp.re + zp.im * zp.im;
        let nl = cscale(zp, pow_dd(r2, half_exp));

        let transport = cscale(pp, zb) + cscale(pb[i], z0) + cscale(mul_i(zp), -(yd * yd * Dd::new(0.25)));
        let drift = cscale(pt[i], z0) + cscale(mul_i(zp), -yd);
        let mut g = mul_i(cscale(transport, tau)) + mul_i(cscale(drift, pv2));
        g = g + cscale(zp, -(Dd::ONE + beta * beta));
        g = g + mul_i(cscale(cscale(zp, lam_c) + cscale(dy, yd), bd - pv1));
        g = g + mul_i(cscale(dy, beta * Dd::new(2.0)));
        g = g + dyy + cscale(dy, pot) + nl;
        let phase = Complex64::from_polar(1.0, -(pr.beta_inf + bt) * y - b * y * y / 4.0);
        out.push(-cdd_to_c64(g) * phase);
    }
    let psi = ComplexField::new(grid, out)?;
    let w = WeightSpec::new(b, pr.beta_inf + bt, pr.n_dim, pr.alpha)?;
    let norm = h1mu_norm(&psi, &w)?;
    Ok((psi, norm))
}
