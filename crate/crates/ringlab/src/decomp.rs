//! Modulation decomposition of radial fields into a ring bubble plus error, the `Mod(t)`
//! defects of the decomposed parameters and the energy/Morawetz functional `𝓘`.
//!
//! Fields live on the radial grid; the error `ε` is reported on the same nodes expressed in
//! the ring variable `y = (r − r(t))/λ`, so no interpolation of the data is ever needed.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundstate::{lam_q_value, q_value, qp_value, ProblemParams};
use crate::modode::{ModState, Polynomials};
use crate::nlsim::{RadialGrid, RadialSolver, WaveField};
use crate::numerics::{h1mu_norm, ComplexField, Grid1D, WeightSpec};
use crate::profile::{zeta, ProfileExpansion, ProfileSampler};

/// Test functions are dropped beyond this `|y|`.
pub const TEST_SUPPORT: f64 = 60.0;

/// `ζ_b(y)·(yQ, Q, ΛQ, Q')`.
pub fn test_functions(p: f64, b: f64, y: f64) -> [f64; 4] {
    if y.abs() > TEST_SUPPORT {
        return [0.0; 4];
    }
    let z = zeta(b.sqrt() * y).0;
    if z == 0.0 {
        return [0.0; 4];
    }
    let q = q_value(p, y);
    [z * y * q, z * q, z * lam_q_value(p, y), z * qp_value(p, y)]
}

fn accumulate(acc: &mut [f64; 4], e: Complex64, t: &[f64; 4]) {
    acc[0] += e.re * t[0];
    acc[1] += e.re * t[1];
    acc[2] += e.im * t[2];
    acc[3] += e.im * t[3];
}

/// `(ε̃₁, ζ_b yQ), (ε̃₁, ζ_b Q), (ε̃₂, ζ_b ΛQ), (ε̃₂, ζ_b Q')` by the trapezoidal rule.
pub fn orthogonality_residuals(eps_tilde: &ComplexField, b: f64, p: f64) -> [f64; 4] {
    let g = eps_tilde.grid;
    let mut acc = [0.0; 4];
    for (i, e) in eps_tilde.values.iter().enumerate() {
        accumulate(&mut acc, *e, &test_functions(p, b, g.node(i)));
    }
    acc.map(|v| v * g.h)
}

/// `b = 2βλ/(αr)`.
pub fn frozen_b(params: &ProblemParams, lambda: f64, r: f64, btilde: f64) -> f64 {
    2.0 * (params.beta_inf + btilde) * lambda / (params.alpha * r)
}

/// The modulated state with `b` and `g` recomputed from `(λ, r, β̃)`.
pub fn modulated_state(params: &ProblemParams, lambda: f64, r: f64, gamma: f64, btilde: f64, s: f64, t: f64) -> ModState {
    let b = frozen_b(params, lambda, r, btilde);
    ModState { lambda, r, gamma, btilde, b, s, t, g: r / lambda.powf(params.alpha) }
}

/// The radial nodes as a `y`-grid for the state `m`.
pub fn ring_grid(grid: &RadialGrid, m: &ModState) -> Result<Grid1D> {
    Grid1D::new(-m.r / m.lambda, (grid.r_max - m.r) / m.lambda, grid.n_r)
}

/// `λ^{−2/(p−1)} Q_{b,β̃}((r − r(t))/λ) e^{iγ}` on `grid`, without support checks.
pub fn ansatz_field(exp: &ProfileExpansion, m: &ModState, grid: RadialGrid) -> WaveField {
    let frozen = ProfileSampler::new(exp).freeze(m.b, m.btilde);
    let amp = Complex64::from_polar(m.lambda.powf(-exp.params.amp_exp()), m.gamma);
    let mut f = WaveField::from_fn(grid, m.t, |r| amp * frozen.qb((r - m.r) / m.lambda));
    *f.u.last_mut().unwrap() = amp * frozen.qb((grid.r_max - m.r) / m.lambda);
    f
}

/// `ε(y) = λ^{2/(p−1)} ũ(r(t) + λy) e^{−iγ}` on the ring grid.
pub fn error_profile(u_tilde: &WaveField, m: &ModState, params: &ProblemParams) -> Result<ComplexField> {
    let rot = Complex64::from_polar(m.lambda.powf(params.amp_exp()), -m.gamma);
    ComplexField::new(ring_grid(&u_tilde.grid, m)?, u_tilde.u.iter().map(|z| z * rot).collect())
}

/// `ε̃ = ε e^{iβy}`.
pub fn tilde(eps: &ComplexField, beta: f64) -> ComplexField {
    let g = eps.grid;
    ComplexField { grid: g, values: eps.values.iter().enumerate().map(|(i, z)| z * Complex64::from_polar(1.0, beta * g.node(i))).collect() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompOptions {
    /// Largest admissible `‖ε̃‖_{L²}/‖Q‖_{L²}` on the soliton window.
    pub delta: f64,
    pub max_iter: usize,
}

impl Default for DecompOptions {
    fn default() -> Self {
        DecompOptions { delta: 0.1, max_iter: 50 }
    }
}

#[derive(Clone, Debug)]
pub struct DecompResult {
    pub modulation: ModState,
    pub eps: ComplexField,
    pub eps_tilde: ComplexField,
    pub ortho_residuals: [f64; 4],
    pub newton_iters: usize,
    pub eps_h1mu: f64,
    /// `‖ε̃‖_{L²}/‖Q‖_{L²}` over `|y| ≤ TEST_SUPPORT`.
    pub local_size: f64,
}

impl DecompResult {
    /// `ũ = u − Q̃` on the radial grid.
    pub fn u_tilde(&self, grid: RadialGrid, p: f64) -> WaveField {
        let m = &self.modulation;
        let rot = Complex64::from_polar(m.lambda.powf(-2.0 / (p - 1.0)), m.gamma);
        WaveField { grid, u: self.eps.values.iter().map(|z| z * rot).collect(), t: m.t }
    }
}

struct Probe {
    rho: [f64; 4],
    tnorm: [f64; 4],
    eps_norm: f64,
    q_norm: f64,
}

impl Probe {
    fn merit(&self) -> f64 {
        (0..4).map(|j| self.rho[j].abs() / self.tnorm[j]).fold(0.0, f64::max)
    }

    fn converged(&self) -> bool {
        (0..4).all(|j| self.rho[j].abs() <= self.tnorm[j] * (1e-10 * self.eps_norm + 1e-13 * self.q_norm))
    }
}

struct Target<'a> {
    field: &'a WaveField,
    params: ProblemParams,
    sampler: ProfileSampler,
}

impl Target<'_> {
    fn check(&self, x: &[f64; 4]) -> Result<f64> {
        let [lambda, r, _, bt] = *x;
        let b = frozen_b(&self.params, lambda, r, bt);
        if !(lambda > 0.0 && r > 0.0 && self.params.beta_inf + bt > 0.0 && b > 0.0 && b < 0.5) {
            return Err(Error::Numerical(format!(
                "modulation left the admissible region: λ = {lambda:e}, r = {r:e}, β̃ = {bt:e}, b = {b:e}"
            )));
        }
        Ok(b)
    }

    fn probe(&self, x: &[f64; 4]) -> Result<Probe> {
        let b = self.check(x)?;
        let [lambda, r, gamma, bt] = *x;
        let beta = self.params.beta_inf + bt;
        let p = self.params.p;
        let frozen = self.sampler.freeze(b, bt);
        let rot = Complex64::from_polar(lambda.powf(self.params.amp_exp()), -gamma);
        let grid = &self.field.grid;
        let lo = ((r - TEST_SUPPORT * lambda) / grid.h).floor().max(0.0) as usize;
        let hi = (((r + TEST_SUPPORT * lambda) / grid.h).ceil() as usize).min(grid.n_r - 1);
        let (mut rho, mut tn, mut en, mut qn) = ([0.0; 4], [0.0; 4], 0.0, 0.0);
        for i in lo..=hi {
            let y = (grid.node(i) - r) / lambda;
            let t = test_functions(p, b, y);
            let e = (self.field.u[i] * rot - frozen.qb(y)) * Complex64::from_polar(1.0, beta * y);
            accumulate(&mut rho, e, &t);
            for j in 0..4 {
                tn[j] += t[j] * t[j];
            }
            en += e.norm_sqr();
            qn += q_value(p, y).powi(2);
        }
        let hy = grid.h / lambda;
        Ok(Probe { rho: rho.map(|v| v * hy), tnorm: tn.map(|v| (v * hy).sqrt()), eps_norm: (en * hy).sqrt(), q_norm: (qn * hy).sqrt() })
    }
}

/// Decomposition with default options.
pub fn decompose(field: &WaveField, guess: &ModState, exp: &ProfileExpansion) -> Result<DecompResult> {
    decompose_with(field, guess, exp, &DecompOptions::default())
}

/// Damped Newton iteration on the four orthogonality conditions in `(λ, r, γ, β̃)`, with `b`
/// slaved to the frozen law and a central-difference Jacobian.
pub fn decompose_with(field: &WaveField, guess: &ModState, exp: &ProfileExpansion, opts: &DecompOptions) -> Result<DecompResult> {
    let params = exp.params;
    let target = Target { field, params, sampler: ProfileSampler::new(exp) };
    let mut x = [guess.lambda, guess.r, guess.gamma, guess.btilde];
    let scale = [guess.lambda, guess.lambda, 1.0, 1.0];
    let mut cur = target.probe(&x)?;
    let mut iters = 0;
    while !cur.converged() {
        if iters == opts.max_iter {
            return Err(Error::NoConvergence(format!("decomposition after {iters} Newton steps (merit {:e})", cur.merit())));
        }
        iters += 1;
        let mut jac = Matrix4::zeros();
        for k in 0..4 {
            let d = 1e-6 * scale[k];
            let (mut xp, mut xm) = (x, x);
            xp[k] += d;
            xm[k] -= d;
            let (ep, em) = (target.probe(&xp)?, target.probe(&xm)?);
            for j in 0..4 {
                jac[(j, k)] = (ep.rho[j] - em.rho[j]) / (2.0 * d);
            }
        }
        let normalized = Matrix4::from_fn(|j, k| jac[(j, k)] * scale[k] / cur.tnorm[j]);
        let sv = normalized.singular_values();
        if !(sv.min() > 1e-10 * sv.max()) {
            return Err(Error::Numerical(format!(
                "decomposition Jacobian is ill-conditioned (singular values {:e} .. {:e})",
                sv.min(),
                sv.max()
            )));
        }
        let step = jac.lu().solve(&-Vector4::from(cur.rho)).ok_or_else(|| Error::Numerical("singular decomposition Jacobian".into()))?;
        let merit = cur.merit();
        let mut damping = 1.0;
        loop {
            let trial: [f64; 4] = std::array::from_fn(|k| x[k] + damping * step[k]);
            if let Ok(pr) = target.probe(&trial) {
                if pr.merit() < merit || pr.converged() {
                    x = trial;
                    cur = pr;
                    break;
                }
            }
            damping /= 2.0;
            if damping < 1.0 / 1024.0 {
                return Err(Error::NoConvergence(format!("decomposition line search stalled at merit {merit:e}")));
            }
        }
    }
    let local_size = cur.eps_norm / cur.q_norm;
    if !(local_size < opts.delta) {
        return Err(Error::Numerical(format!("error size {local_size:e} outside the modulation basin δ = {}", opts.delta)));
    }
    let modulation = modulated_state(&params, x[0], x[1], x[2], x[3], guess.s, field.t);
    let q = ansatz_field(exp, &modulation, field.grid);
    let u_tilde = WaveField { grid: field.grid, u: field.u.iter().zip(&q.u).map(|(a, b)| a - b).collect(), t: field.t };
    let eps = error_profile(&u_tilde, &modulation, &params)?;
    let beta = params.beta_inf + modulation.btilde;
    let eps_tilde = tilde(&eps, beta);
    let ortho_residuals = orthogonality_residuals(&eps_tilde, modulation.b, params.p);
    let eps_h1mu = h1mu_norm(&eps, &WeightSpec::new(modulation.b, beta, params.n_dim, params.alpha)?)?;
    Ok(DecompResult { modulation, eps, eps_tilde, ortho_residuals, newton_iters: iters, eps_h1mu, local_size })
}

/// A starting point read off the field: peak location, peak height and phase at the peak.
pub fn initial_guess(field: &WaveField, params: &ProblemParams) -> ModState {
    let n = field.grid.n_r;
    let (i, _) = field.u.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let mut r = field.grid.node(i);
    let mut sup = field.u[i].norm();
    if i > 0 && i + 1 < n {
        let (a, b, c) = (field.u[i - 1].norm(), sup, field.u[i + 1].norm());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            let d = 0.5 * (a - c) / den;
            r += d * field.grid.h;
            sup = b - 0.25 * (a - c) * d;
        }
    }
    let lambda = (q_value(params.p, 0.0) / sup).powf((params.p - 1.0) / 2.0);
    modulated_state(params, lambda, r, field.u[i].arg(), 0.0, 0.0, field.t)
}

/// The 4×4 matrix of infinitesimal deformations of the decomposition at `(b₀, β̃₀)`: rows
/// `yQ, Q` (real part) and `Q', ΛQ` (imaginary part), columns the shift `z`, the dilation `μ`,
/// the drift `β̃` and the phase `γ`.
pub fn jacobian_matrix(exp: &ProfileExpansion, b0: f64, bt0: f64) -> Result<Matrix4<f64>> {
    let params = exp.params;
    let (p, a, alpha) = (params.p, params.amp_exp(), params.alpha);
    let beta0 = params.beta_inf + bt0;
    if !(b0 >= 0.0 && b0 < 0.5 && beta0 > 0.0) {
        return Err(Error::Input(format!("need 0 <= b0 < 0.5 and β > 0, got b0 = {b0}, β̃0 = {bt0}")));
    }
    let grid = Grid1D::new(-40.0, 40.0, 8001)?;
    let sampler = ProfileSampler::new(exp);
    let base = sampler.freeze(b0, bt0);
    let rho = |v: [f64; 4]| -> [f64; 4] {
        let [z, mu, bt, gamma] = v;
        let b1 = (1.0 + bt / beta0) * b0 * mu / (1.0 + alpha * b0 * z / (2.0 * beta0));
        let beta1 = beta0 + bt;
        let moved = sampler.freeze(b1, bt0 + bt);
        let eps = ComplexField::from_fn(grid, |y| {
            let lhs = mu.powf(a) * base.qb(mu * y + z) * Complex64::from_polar(1.0, -gamma + beta1 * y);
            lhs - moved.qb(y) * Complex64::from_polar(1.0, beta1 * y)
        });
        let r = orthogonality_residuals(&eps, b1, p);
        [r[0], r[1], r[3], r[2]]
    };
    let origin = [0.0, 1.0, 0.0, 0.0];
    let d = 1e-5;
    let mut jac = Matrix4::zeros();
    for k in 0..4 {
        let (mut xp, mut xm) = (origin, origin);
        xp[k] += d;
        xm[k] -= d;
        let (fp, fm) = (rho(xp), rho(xm));
        for j in 0..4 {
            jac[(j, k)] = (fp[j] - fm[j]) / (2.0 * d);
        }
    }
    Ok(jac)
}

pub fn jacobian_determinant(exp: &ProfileExpansion, b0: f64, bt0: f64) -> Result<f64> {
    Ok(jacobian_matrix(exp, b0, bt0)?.determinant())
}

/// `−(1/16)((5−p)/(p−1))² ‖Q‖⁸` with `‖Q‖²` by quadrature.
pub fn determinant_limit(p: f64) -> f64 {
    let h = 1e-3;
    let mass: f64 = (-60_000..=60_000).map(|i| q_value(p, i as f64 * h).powi(2)).sum::<f64>() * h;
    -((5.0 - p) / (p - 1.0)).powi(2) * mass.powi(4) / 16.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModDefects {
    pub t: f64,
    pub s: f64,
    /// `|r_s/λ + 2β|`.
    pub radius: f64,
    /// `|γ_s − 1 − β²|`.
    pub phase: f64,
    /// `|λ_s/λ + b − 𝒫₁|`.
    pub scale: f64,
    /// `|β̃_s − 𝒫₂|`.
    pub drift: f64,
    pub total: f64,
}

/// `s` at each node from `ds = dt/λ²`, with `ln λ` interpolated quadratically in `s`.
pub fn reconstruct_s(series: &[ModState]) -> Vec<f64> {
    let n = series.len();
    let mut s = vec![0.0; n];
    for i in 1..n {
        s[i] = s[i - 1] + (series[i].t - series[i - 1].t) / (series[i].lambda * series[i - 1].lambda);
    }
    if n < 3 {
        return s;
    }
    let gauss = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    for _ in 0..4 {
        let mut next = vec![0.0; n];
        for i in 0..n - 1 {
            let k = i.saturating_sub(if i + 2 < n { 0 } else { 1 });
            let (xs, ys) = ([s[k], s[k + 1], s[k + 2]], [0, 1, 2].map(|j| series[k + j].lambda.ln()));
            let ln_l = |x: f64| {
                (0..3).map(|a| ys[a] * (0..3).filter(|&b| b != a).map(|b| (x - xs[b]) / (xs[a] - xs[b])).product::<f64>()).sum::<f64>()
            };
            let (lo, hi) = (s[i], s[i + 1]);
            let integral: f64 =
                gauss.iter().map(|&(g, w)| w * (2.0 * ln_l(0.5 * (lo + hi) + 0.5 * (hi - lo) * g)).exp()).sum::<f64>() * 0.5 * (hi - lo);
            next[i + 1] = next[i] + (hi - lo) * (series[i + 1].t - series[i].t) / integral;
        }
        s = next;
    }
    s
}

/// Centered `s`-derivatives of a decomposed series; the endpoints are dropped.
pub fn mod_residuals(series: &[ModState], exp: &ProfileExpansion) -> Result<Vec<ModDefects>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Input(format!("Mod(t) needs at least 3 decompositions, got {n}")));
    }
    if series.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Input("decomposition times must increase".into()));
    }
    let polys = Polynomials::from_expansion(exp);
    let beta_inf = exp.params.beta_inf;
    let s = reconstruct_s(series);
    let mut gamma = vec![series[0].gamma; n];
    for i in 1..n {
        let beta = beta_inf + series[i - 1].btilde;
        let predicted = gamma[i - 1] + (1.0 + beta * beta) * (s[i] - s[i - 1]);
        let tau = std::f64::consts::TAU;
        gamma[i] = series[i].gamma + tau * ((predicted - series[i].gamma) / tau).round();
    }
    let mut out = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let (hm, hp) = (s[i] - s[i - 1], s[i + 1] - s[i]);
        if (hp / hm - 1.0).abs() > 0.1 {
            return Err(Error::Input(format!("s-spacing ratio {:.3} at node {i} breaks the centered stencil; resample", hp / hm)));
        }
        let d = |f: &dyn Fn(usize) -> f64| (hm * hm * f(i + 1) - hp * hp * f(i - 1) + (hp * hp - hm * hm) * f(i)) / (hm * hp * (hm + hp));
        let m = &series[i];
        let beta = beta_inf + m.btilde;
        let lam_s = d(&|k| series[k].lambda.ln());
        let r_s = d(&|k| series[k].r);
        let gam_s = d(&|k| gamma[k]);
        let bt_s = d(&|k| series[k].btilde);
        let radius = (r_s / m.lambda + 2.0 * beta).abs();
        let phase = (gam_s - 1.0 - beta * beta).abs();
        let scale = (lam_s + m.b - polys.p1(m.b, m.btilde)).abs();
        let drift = (bt_s - polys.p2(m.b, m.btilde)).abs();
        out.push(ModDefects { t: m.t, s: s[i], radius, phase, scale, drift, total: radius + phase + scale + drift });
    }
    Ok(out)
}

/// Smooth bump on `(−1/2, 1/2)` with `φ(0) = 1 = sup φ`.
pub fn cutoff_phi(z: f64) -> f64 {
    if z.abs() >= 0.5 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - 4.0 * z * z)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub kinetic: f64,
    pub mass: f64,
    pub nonlinear: f64,
    pub morawetz: f64,
    pub total: f64,
    /// `‖∇ũ‖² + ‖ũ‖²/λ²`.
    pub norm: f64,
    /// `𝓘 / (‖∇ũ‖² + ‖ũ‖²/λ²)`.
    pub ratio: f64,
}

/// `𝓘(ũ) = ½‖∇ũ‖² + (1+β²)/(2λ²)‖ũ‖² − ∫[F(Q̃+ũ) − F(Q̃) − F'(Q̃)·ũ] + (β/λ) Im∫φ(r/r(t) − 1) ∂ᵣũ ū`.
pub fn energy_morawetz_i(solver: &RadialSolver, u_tilde: &WaveField, m: &ModState, exp: &ProfileExpansion) -> Result<FunctionalReport> {
    let params = exp.params;
    let bound = (1.0 + params.beta_inf.powi(2)).sqrt() / params.beta_inf;
    if !(1.0 < bound) {
        return Err(Error::Invariant(format!("sup φ = 1 is not below √(1+β∞²)/β∞ = {bound}")));
    }
    if u_tilde.grid != solver.grid {
        return Err(Error::GridMismatch("error field and solver grids differ".into()));
    }
    let grid = solver.grid;
    let beta = params.beta_inf + m.btilde;
    let q = ansatz_field(exp, m, grid);
    let p = params.p;
    let big_f = |z: Complex64| z.norm().powf(p + 1.0) / (p + 1.0);
    let small_f = |z: Complex64| z * z.norm().powf(p - 1.0);
    let nl: f64 = (0..grid.n_r)
        .map(|i| {
            let (qt, ut) = (q.u[i], u_tilde.u[i]);
            solver.w[i] * (big_f(qt + ut) - big_f(qt) - (small_f(qt) * ut.conj()).re)
        })
        .sum::<f64>()
        * solver.area
        * grid.h;
    let mor: f64 = (0..grid.n_r - 1)
        .map(|i| {
            let rm = grid.node(i) + grid.h / 2.0;
            let phi = cutoff_phi(rm / m.r - 1.0);
            if phi == 0.0 {
                0.0
            } else {
                phi * solver.c[i] * (u_tilde.u[i + 1] * u_tilde.u[i].conj()).im
            }
        })
        .sum::<f64>()
        * solver.area;
    let grad = solver.grad_sq(u_tilde);
    let mass = solver.mass(u_tilde);
    let kinetic = 0.5 * grad;
    let mass_term = (1.0 + beta * beta) / (2.0 * m.lambda * m.lambda) * mass;
    let morawetz = beta / m.lambda * mor;
    let total = kinetic + mass_term - nl + morawetz;
    let norm = grad + mass / (m.lambda * m.lambda);
    let ratio = if norm > 0.0 { total / norm } else { 0.0 };
    Ok(FunctionalReport { kinetic, mass: mass_term, nonlinear: nl, morawetz, total, norm, ratio })
}

/// Projects `ε̃` onto the four orthogonality conditions, in place.
pub fn orthogonalize(eps_tilde: &mut ComplexField, b: f64, p: f64) {
    let g = eps_tilde.grid;
    let tf: Vec<[f64; 4]> = (0..g.n).map(|i| test_functions(p, b, g.node(i))).collect();
    for (part, (ja, jb)) in [(0usize, 1usize), (2, 3)].into_iter().enumerate() {
        let mut gram = Matrix2::<f64>::zeros();
        let mut rhs = Vector2::<f64>::zeros();
        for (i, t) in tf.iter().enumerate() {
            let v = if part == 0 { eps_tilde.values[i].re } else { eps_tilde.values[i].im };
            let pair = [t[ja], t[jb]];
            for a in 0..2 {
                rhs[a] += v * pair[a];
                for c in 0..2 {
                    gram[(a, c)] += pair[a] * pair[c];
                }
            }
        }
        let Some(coef) = gram.lu().solve(&rhs) else { continue };
        for (i, t) in tf.iter().enumerate() {
            let d = coef[0] * t[ja] + coef[1] * t[jb];
            if part == 0 {
                eps_tilde.values[i].re -= d;
            } else {
                eps_tilde.values[i].im -= d;
            }
        }
    }
}

/// A random smooth `ε̃` satisfying the orthogonality conditions with `‖ε̃‖_{L²} = size`,
/// returned as `ũ` on `grid`.
pub fn random_orthogonal_error<R: Rng>(
    exp: &ProfileExpansion,
    m: &ModState,
    grid: RadialGrid,
    size: f64,
    rng: &mut R,
) -> Result<WaveField> {
    let params = exp.params;
    let yg = ring_grid(&grid, m)?;
    let bumps: Vec<(Complex64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (c, rng.random_range(-6.0..6.0), rng.random_range(0.5..3.0), rng.random_range(-2.0..2.0))
        })
        .collect();
    let mut et = ComplexField::from_fn(yg, |y| {
        bumps.iter().map(|&(c, y0, w, k)| c * (-(y - y0).powi(2) / (2.0 * w * w)).exp() * Complex64::from_polar(1.0, k * y)).sum()
    });
    orthogonalize(&mut et, m.b, params.p);
    let norm = (et.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * yg.h).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Numerical("random error field vanished after projection".into()));
    }
    let beta = params.beta_inf + m.btilde;
    let rot = Complex64::from_polar(size / norm * m.lambda.powf(-params.amp_exp()), m.gamma);
    let u = et.values.iter().enumerate().map(|(i, z)| z * rot * Complex64::from_polar(1.0, -beta * yg.node(i))).collect();
    Ok(WaveField { grid, u, t: m.t })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompRow {
    pub t: f64,
    pub lambda: f64,
    pub r: f64,
    pub gamma: f64,
    pub btilde: f64,
    pub b: f64,
    pub eps_h1mu: f64,
    pub ortho: [f64; 4],
    /// `NaN` where no centered stencil is available.
    pub mod_total: f64,
}

impl DecompRow {
    pub fn new(d: &DecompResult, mod_total: f64) -> DecompRow {
        let m = &d.modulation;
        DecompRow {
            t: m.t,
            lambda: m.lambda,
            r: m.r,
            gamma: m.gamma,
            btilde: m.btilde,
            b: m.b,
            eps_h1mu: d.eps_h1mu,
            ortho: d.ortho_residuals,
            mod_total,
        }
    }
}

pub const SERIES_HEADER: &str = "t,lambda,r,gamma,btilde,b,eps_h1mu,ortho1,ortho2,ortho3,ortho4,mod_total";

pub fn write_decomp_series(rows: &[DecompRow], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SERIES_HEADER}")?;
    for r in rows {
        let v = [r.t, r.lambda, r.r, r.gamma, r.btilde, r.b, r.eps_h1mu, r.ortho[0], r.ortho[1], r.ortho[2], r.ortho[3], r.mod_total];
        let line: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_decomp_series(path: &Path) -> Result<Vec<DecompRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(SERIES_HEADER) {
        return Err(Error::Format(format!("{} is not a decomposition series", path.display())));
    }
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse::<f64>().map_err(|e| Error::Format(e.to_string()))).collect::<Result<_>>()?;
            if v.len() != 12 {
                return Err(Error::Format(format!("expected 12 columns, got {}", v.len())));
            }
            Ok(DecompRow {
                t: v[0],
                lambda: v[1],
                r: v[2],
                gamma: v[3],
                btilde: v[4],
                b: v[5],
                eps_h1mu: v[6],
                ortho: [v[7], v[8], v[9], v[10]],
                mod_total: v[11],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
