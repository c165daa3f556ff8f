//! The modulation system for `(λ, r, γ, β̃)` integrated through `(g, b, β̃, γ)`, its
//! physical-time parametrization and the perturbed-system stability experiment.

use std::io::Write;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{power_law_fit, PowerFit};
use crate::groundstate::ProblemParams;
use crate::ode::{dopri45, dopri45_peak, log_nodes, Tolerance};
use crate::profile::{series::monomial, ProfileExpansion};

/// The modulation polynomials as `(j, l, c)` monomials `c b^j β̃^l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomials {
    pub p1: Vec<(usize, usize, f64)>,
    pub p2: Vec<(usize, usize, f64)>,
}

fn poly_eval(t: &[(usize, usize, f64)], b: f64, bt: f64) -> f64 {
    t.iter().map(|&(j, l, c)| c * b.powi(j as i32) * bt.powi(l as i32)).sum()
}

fn pow_diff(x: f64, dx: f64, n: usize) -> f64 {
    let x1 = x + dx;
    (0..n).map(|i| x1.powi(i as i32) * x.powi((n - 1 - i) as i32)).sum::<f64>() * dx
}

/// `P(b+Δb, β̃+Δβ̃) − P(b, β̃)` without cancellation.
fn poly_diff(t: &[(usize, usize, f64)], b: f64, bt: f64, db: f64, dbt: f64) -> f64 {
    t.iter().map(|&(j, l, c)| c * (pow_diff(b, db, j) * (bt + dbt).powi(l as i32) + b.powi(j as i32) * pow_diff(bt, dbt, l))).sum()
}

impl Polynomials {
    /// `P₁ = 0`, `P₂ = −2bβ̃`.
    pub fn leading() -> Polynomials {
        Polynomials { p1: vec![], p2: vec![(1, 1, -2.0)] }
    }

    /// The computed constants, with those that vanish identically set to zero:
    /// orders `(1,0), (0,1), (2,0), (0,2)` of both and `(1,1)` of `P₁`.
    pub fn from_expansion(exp: &ProfileExpansion) -> Polynomials {
        const ZERO: [(usize, usize); 4] = [(1, 0), (0, 1), (2, 0), (0, 2)];
        let collect = |s: &crate::profile::ScalarSeries, first: bool| {
            s.c.iter()
                .enumerate()
                .map(|(i, c)| (monomial(i), c.to_f64()))
                .filter(|&((j, l), c)| c != 0.0 && !ZERO.contains(&(j, l)) && !(first && (j, l) == (1, 1)))
                .map(|((j, l), c)| (j, l, c))
                .collect()
        };
        Polynomials { p1: collect(exp.p1_table(), true), p2: collect(exp.p2_table(), false) }
    }

    pub fn p1(&self, b: f64, bt: f64) -> f64 {
        poly_eval(&self.p1, b, bt)
    }

    pub fn p2(&self, b: f64, bt: f64) -> f64 {
        poly_eval(&self.p2, b, bt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModState {
    pub lambda: f64,
    pub r: f64,
    pub gamma: f64,
    pub btilde: f64,
    pub b: f64,
    pub s: f64,
    pub t: f64,
    pub g: f64,
}

/// `λ = (αbg/(2β))^{1/(1−α)}`, `r = gλ^α`.
pub fn scale_and_radius(params: &ProblemParams, b: f64, g: f64, btilde: f64) -> (f64, f64) {
    let a = params.alpha;
    let beta = params.beta_inf + btilde;
    let lambda = (a * b * g / (2.0 * beta)).powf(1.0 / (1.0 - a));
    (lambda, g * lambda.powf(a))
}

impl ModState {
    pub fn from_reduced(params: &ProblemParams, s: f64, g: f64, b: f64, btilde: f64, gamma: f64) -> ModState {
        let (lambda, r) = scale_and_radius(params, b, g, btilde);
        ModState { lambda, r, gamma, btilde, b, s, t: f64::NAN, g }
    }

    /// The state of the NLS solution `μ^{2/(p−1)} u(μ²t, μx)`: lengths over `μ`, times over `μ²`.
    pub fn rescaled(&self, params: &ProblemParams, mu: f64) -> ModState {
        ModState { lambda: self.lambda / mu, r: self.r / mu, t: self.t / (mu * mu), g: self.g * mu.powf(params.alpha - 1.0), ..*self }
    }

    /// Relative defect of `b = 2βλ/(αr)`.
    pub fn frozen_b_defect(&self, params: &ProblemParams) -> f64 {
        let beta = params.beta_inf + self.btilde;
        (self.b - 2.0 * beta * self.lambda / (params.alpha * self.r)).abs() / self.b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModRhs {
    pub lambda_s: f64,
    pub r_s: f64,
    pub gamma_s: f64,
    pub btilde_s: f64,
    pub b_s: f64,
    pub g_s: f64,
}

pub fn rhs_exact(params: &ProblemParams, m: &ModState, polys: &Polynomials) -> Result<ModRhs> {
    if !(m.b > 0.0) {
        return Err(Error::Input(format!("b must be positive, got {}", m.b)));
    }
    let beta = params.beta_inf + m.btilde;
    let p1 = polys.p1(m.b, m.btilde);
    let p2 = polys.p2(m.b, m.btilde);
    Ok(ModRhs {
        lambda_s: m.lambda * (-m.b + p1),
        r_s: -2.0 * beta * m.lambda,
        gamma_s: 1.0 + beta * beta,
        btilde_s: p2,
        b_s: -(1.0 - params.alpha) * m.b * m.b + m.b / beta * p2 + m.b * p1,
        g_s: -params.alpha * p1 * m.g,
    })
}

fn reduced_rhs(params: &ProblemParams, polys: &Polynomials, y: &[f64; 4]) -> Result<[f64; 4]> {
    let [g, b, bt, _] = *y;
    if !(b > 0.0) {
        return Err(Error::Numerical(format!("b left (0, ∞): {b}")));
    }
    let beta = params.beta_inf + bt;
    let p1 = polys.p1(b, bt);
    let p2 = polys.p2(b, bt);
    Ok([-params.alpha * p1 * g, -(1.0 - params.alpha) * b * b + b / beta * p2 + b * p1, p2, 1.0 + beta * beta])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub s0: f64,
    pub g0: f64,
    pub gamma0: f64,
    pub s_end: f64,
    pub rtol: f64,
    pub nodes_per_decade: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { s0: 100.0, g0: 0.9, gamma0: 0.0, s_end: 1e7, rtol: 1e-10, nodes_per_decade: 40 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModTrajectory {
    pub states: Vec<ModState>,
    /// `∫ λ² ds` between consecutive states.
    pub segments: Vec<f64>,
    /// Extrapolated `lim g(s)` from the last decade and from the one before.
    pub g_inf: f64,
    pub g_inf_alt: f64,
    /// First `s` with `|β̃| > s^{−3/2}`, if any.
    pub bootstrap_exit: Option<f64>,
    pub steps: usize,
}

impl ModTrajectory {
    pub fn column(&self, f: impl Fn(&ModState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    /// Nearest recorded state to `s`.
    pub fn at_s(&self, s: f64) -> &ModState {
        self.states.iter().min_by(|a, b| (a.s / s).ln().abs().total_cmp(&(b.s / s).ln().abs())).expect("trajectory is never empty")
    }

    /// Nearest recorded state to physical time `t < 0`.
    pub fn at_t(&self, t: f64) -> Option<&ModState> {
        self.states.iter().filter(|m| m.t < 0.0).min_by(|a, b| (a.t / t).ln().abs().total_cmp(&(b.t / t).ln().abs()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "s,t,lambda,r,b,btilde,gamma,g")?;
        for m in &self.states {
            writeln!(
                f,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                m.s, m.t, m.lambda, m.r, m.b, m.btilde, m.gamma, m.g
            )?;
        }
        Ok(())
    }
}

/// Aitken extrapolation of `g` from three geometrically spaced samples ending at `s_hi`.
fn g_limit(states: &[ModState], s_hi: f64) -> f64 {
    let pick = |s: f64| states.iter().min_by(|a, b| (a.s / s).ln().abs().total_cmp(&(b.s / s).ln().abs())).map(|m| m.g).unwrap_or(f64::NAN);
    let (g0, g1, g2) = (pick(s_hi / 10.0), pick(s_hi / 10f64.sqrt()), pick(s_hi));
    let d1 = g1 - g0;
    let d2 = g2 - g1;
    if (d1 - d2).abs() <= 1e-300 || d1 == 0.0 {
        return g2;
    }
    g2 - d2 * d2 / (d2 - d1)
}

pub fn integrate_exact(params: &ProblemParams, polys: &Polynomials, opts: &OdeOptions) -> Result<ModTrajectory> {
    if opts.s0 < 100.0 {
        return Err(Error::Input(format!("s0 must be >= 100, got {}", opts.s0)));
    }
    if !(opts.g0 > 0.5 && opts.g0 < 1.0) {
        return Err(Error::Input(format!("g0 must lie in (1/2, 1), got {}", opts.g0)));
    }
    if !(opts.s_end > opts.s0) {
        return Err(Error::Input("s_end must exceed s0".into()));
    }
    let b0 = 1.0 / ((1.0 - params.alpha) * opts.s0);
    let y0 = [opts.g0, b0, 1.0 / (opts.s0 * opts.s0), opts.gamma0, 0.0];
    let nodes = log_nodes(opts.s0, opts.s_end, opts.nodes_per_decade);
    let mut states = Vec::with_capacity(nodes.len());
    let mut segments = Vec::with_capacity(nodes.len());
    let mut exit = None;
    let tol = Tolerance { rtol: opts.rtol, atol: 1e-300 };
    let f = |_: f64, y: &[f64; 5]| -> Result<[f64; 5]> {
        let r = reduced_rhs(params, polys, &[y[0], y[1], y[2], y[3]])?;
        let (lambda, _) = scale_and_radius(params, y[1], y[0], y[2]);
        Ok([r[0], r[1], r[2], r[3], lambda * lambda])
    };
    let stats = dopri45(f, opts.s0, y0, &nodes, tol, |s, y| {
        let m = ModState::from_reduced(params, s, y[0], y[1], y[2], y[3]);
        if exit.is_none() && m.btilde.abs() > s.powf(-1.5) {
            exit = Some(s);
        }
        states.push(m);
        segments.push(y[4]);
        y[4] = 0.0;
        Ok(true)
    })?;
    segments.remove(0);
    let g_inf = g_limit(&states, opts.s_end);
    let g_inf_alt = g_limit(&states, opts.s_end / 10.0);
    Ok(ModTrajectory { states, segments, g_inf, g_inf_alt, bootstrap_exit: exit, steps: stats.accepted })
}

/// Assigns `t(s) = −∫_s^{S} λ² − tail`, the tail from a power-law fit of `λ²` on `[S/10, S]`.
pub fn to_physical_time(traj: &ModTrajectory) -> Result<ModTrajectory> {
    let s_max = traj.states.last().ok_or_else(|| Error::Input("empty trajectory".into()))?.s;
    if traj.segments.len() + 1 != traj.states.len() {
        return Err(Error::Input("trajectory carries no time increments".into()));
    }
    let s: Vec<f64> = traj.column(|m| m.s);
    let l2: Vec<f64> = traj.column(|m| m.lambda * m.lambda);
    let fit = power_law_fit(&s, &l2, (s_max / 10.0, s_max))?;
    let q = -fit.exponent;
    if !(q > 1.0) || !fit.prefactor.is_finite() {
        return Err(Error::NoConvergence(format!("λ² tail exponent {q} does not give a convergent time integral")));
    }
    let mut out = traj.clone();
    let mut acc = fit.prefactor * s_max.powf(1.0 - q) / (q - 1.0);
    let n = out.states.len();
    out.states[n - 1].t = -acc;
    for i in (0..n - 1).rev() {
        acc += traj.segments[i];
        out.states[i].t = -acc;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhysicalExponents {
    pub lambda: PowerFit,
    pub r: PowerFit,
    pub gamma: PowerFit,
    pub expected: [f64; 3],
}

/// Fits `λ, r, γ` against `|t|` over the last `decades` decades of `s`.
pub fn physical_exponents(params: &ProblemParams, traj: &ModTrajectory, decades: f64) -> Result<PhysicalExponents> {
    let s_max = traj.states.last().map(|m| m.s).unwrap_or(0.0);
    let tail: Vec<&ModState> = traj.states.iter().filter(|m| m.s >= s_max / 10f64.powf(decades)).collect();
    let t: Vec<f64> = tail.iter().map(|m| m.t.abs()).collect();
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("trajectory has no physical time; call to_physical_time".into()));
    }
    let w = (t.iter().cloned().fold(f64::INFINITY, f64::min), t.iter().cloned().fold(0.0, f64::max));
    let col = |f: fn(&ModState) -> f64| tail.iter().map(|m| f(m)).collect::<Vec<f64>>();
    let a = params.alpha;
    Ok(PhysicalExponents {
        lambda: power_law_fit(&t, &col(|m| m.lambda), w)?,
        r: power_law_fit(&t, &col(|m| m.r), w)?,
        gamma: power_law_fit(&t, &col(|m| m.gamma), w)?,
        expected: [1.0 / (1.0 + a), a / (1.0 + a), -(1.0 - a) / (1.0 + a)],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingMode {
    /// `+forcing_scale·b^k` in every equation.
    Uniform,
    /// Signs redrawn on a fixed partition of `ln|t|`, from the given seed.
    Random(u64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbedRun {
    pub abs_t: Vec<f64>,
    pub db: Vec<f64>,
    pub dbtilde: Vec<f64>,
    pub dg: Vec<f64>,
    pub dgamma: Vec<f64>,
    pub t_bar: f64,
    pub t_under: f64,
    pub mode: ForcingMode,
    /// `|t|` at which `|Δb|+|Δβ̃|+|Δg|` first exceeds `|t|^{2/(1+α)}`, if it does.
    pub bootstrap_exit: Option<f64>,
    pub fit: Option<PowerFit>,
    pub gamma_fit: Option<PowerFit>,
    pub predicted: f64,
    /// Exponent of the `|Δγ|` upper bound.
    pub predicted_gamma: f64,
}

/// Decay exponent of the summed differences predicted for forcing of size `b^k`.
pub fn predicted_difference_exponent(alpha: f64, k: usize) -> f64 {
    k as f64 * (1.0 - alpha) / (1.0 + alpha) + 1.0 - 2.0 / (1.0 + alpha)
}

/// Integrates the exact and the `b^k`-forced systems jointly in `τ = ln|t|`, backward
/// in time from `t̄` down to `t_under`, both snapped to the nearest node of `traj`.
/// Differences are carried as variables and their right-hand sides are formed
/// without cancellation.
pub fn integrate_perturbed(
    params: &ProblemParams,
    polys: &Polynomials,
    traj: &ModTrajectory,
    forcing_scale: f64,
    tbar: f64,
    t_under: f64,
    mode: ForcingMode,
) -> Result<PerturbedRun> {
    let k = params.k;
    if (k as f64) <= 2.0 / (1.0 - params.alpha) + 1.0 {
        return Err(Error::Params(format!("k = {k} violates k > 2/(1-alpha)+1")));
    }
    if !(t_under < tbar && tbar < 0.0) {
        return Err(Error::Input(format!("need t_under < tbar < 0, got {t_under:e}, {tbar:e}")));
    }
    let missing = || Error::Input("trajectory needs physical times; call to_physical_time".into());
    let start = *traj.at_t(tbar).ok_or_else(missing)?;
    let end = *traj.at_t(t_under).ok_or_else(missing)?;
    if !(end.t < start.t) {
        return Err(Error::Input("t_under and tbar snap to the same node".into()));
    }
    let tau0 = start.t.abs().ln();
    let tau1 = end.t.abs().ln();
    let a = params.alpha;
    let bi = params.beta_inf;
    let signs: Vec<[f64; 4]> = match mode {
        ForcingMode::Uniform => vec![[1.0; 4]],
        ForcingMode::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| std::array::from_fn(|_| if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 })).collect()
        }
    };
    let sign_at = |tau: f64| {
        let u = ((tau - tau0) / (tau1 - tau0)).clamp(0.0, 1.0);
        signs[((u * signs.len() as f64) as usize).min(signs.len() - 1)]
    };
    let f = |tau: f64, y: &[f64; 8]| -> Result<[f64; 8]> {
        let [g, b, bt, _, dg, db, dbt, _] = *y;
        let (gp, bp, btp) = (g + dg, b + db, bt + dbt);
        if !(b > 0.0 && bp > 0.0) {
            return Err(Error::Numerical("b left (0, ∞)".into()));
        }
        let (beta, betap) = (bi + bt, bi + btp);
        let p1 = polys.p1(b, bt);
        let p2 = polys.p2(b, bt);
        let dp1 = poly_diff(&polys.p1, b, bt, db, dbt);
        let dp2 = poly_diff(&polys.p2, b, bt, db, dbt);
        let (p1p, p2p) = (p1 + dp1, p2 + dp2);
        let fs = sign_at(tau).map(|v| v * forcing_scale);
        let bk = bp.powi(k as i32);
        let fe = [-a * p1 * g, -(1.0 - a) * b * b + b / beta * p2 + b * p1, p2, 1.0 + beta * beta];
        let d_fg = -a * (dp1 * gp + p1 * dg) + bk * gp * (a * bp * fs[1] / (2.0 * betap) - a * fs[0]);
        let d_b_over_beta = (db * beta - b * dbt) / (beta * betap);
        let d_fb = -(1.0 - a) * db * (b + bp)
            + (d_b_over_beta * p2p + b / beta * dp2)
            + (db * p1p + b * dp1)
            + bk * bp * (fs[2] / betap + fs[0] - a * bp * fs[1] / (2.0 * betap));
        let d_fbt = dp2 + fs[2] * bk;
        let d_fgam = dbt * (beta + betap) + fs[3] * bk;
        let (lambda, _) = scale_and_radius(params, b, g, bt);
        let ratio = -2.0 / (1.0 - a) * ((db / b).ln_1p() + (dg / g).ln_1p() - (dbt / beta).ln_1p());
        let inv_l2_diff = ratio.exp_m1() / (lambda * lambda);
        let abs_t = tau.exp();
        let c = -abs_t / (lambda * lambda);
        let dfe = [d_fg, d_fb, d_fbt, d_fgam];
        let mut out = [0.0; 8];
        for i in 0..4 {
            out[i] = c * fe[i];
            out[4 + i] = c * dfe[i] - abs_t * fe[i] * inv_l2_diff - abs_t * dfe[i] * inv_l2_diff;
        }
        Ok(out)
    };
    let nodes: Vec<f64> = (1..=400).map(|i| tau0 + (tau1 - tau0) * i as f64 / 400.0).collect();
    let y0 = [start.g, start.b, start.btilde, start.gamma, 0.0, 0.0, 0.0, 0.0];
    let mut run = PerturbedRun {
        abs_t: vec![],
        db: vec![],
        dbtilde: vec![],
        dg: vec![],
        dgamma: vec![],
        t_bar: start.t,
        t_under: end.t,
        mode,
        bootstrap_exit: None,
        fit: None,
        gamma_fit: None,
        predicted: predicted_difference_exponent(a, k),
        predicted_gamma: k as f64 * (1.0 - a) / (1.0 + a) + 2.0 - (5.0 - a) / (1.0 + a),
    };
    let tol = Tolerance { rtol: 1e-11, atol: 1e-300 };
    let peak = [false, false, false, false, true, true, true, true];
    dopri45_peak(f, tau0, y0, &nodes, tol, peak, |tau, y| {
        let at = tau.exp();
        run.abs_t.push(at);
        run.dg.push(y[4]);
        run.db.push(y[5]);
        run.dbtilde.push(y[6]);
        run.dgamma.push(y[7]);
        let total = y[4].abs() + y[5].abs() + y[6].abs();
        if run.bootstrap_exit.is_none() && total > at.powf(2.0 / (1.0 + a)) {
            run.bootstrap_exit = Some(at);
        }
        Ok(true)
    })?;
    if forcing_scale != 0.0 {
        let total: Vec<f64> = (0..run.abs_t.len()).map(|i| run.db[i].abs() + run.dbtilde[i].abs() + run.dg[i].abs()).collect();
        let lo = run.t_bar.abs() * 1e3;
        let hi = run.t_under.abs();
        run.fit = power_law_fit(&run.abs_t, &total, (lo, hi)).ok();
        run.gamma_fit = power_law_fit(&run.abs_t, &run.dgamma, (lo, hi)).ok();
    }
    Ok(run)
}

#[cfg(test)]
mod tests;
