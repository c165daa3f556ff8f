//! Radial NLS solver `i∂ₜu + ∂²ᵣu + (N−1)/r ∂ᵣu + |u|^{p−1}u = 0` on `[0, r_max]`:
//! Strang splitting of exact nonlinear phase rotations around a Crank–Nicolson step of
//! a conservative second-order radial Laplacian, plus the blow-up diagnostics.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{linear_fit, power_law_fit, PowerFit};
use crate::groundstate::{q_value, sphere_area, ProblemParams};
use crate::modode::ModState;
use crate::profile::{ProfileExpansion, ProfileSampler};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n_r: usize,
    pub h: f64,
}

impl RadialGrid {
    /// Nodes `r_i = i·h`, `i = 0..n_r`, with `r_{n_r−1} = r_max`.
    pub fn new(r_max: f64, n_r: usize) -> Result<RadialGrid> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::Input(format!("r_max must be positive, got {r_max}")));
        }
        if n_r < 8 {
            return Err(Error::Input(format!("radial grid needs at least 8 nodes, got {n_r}")));
        }
        Ok(RadialGrid { r_max, n_r, h: r_max / (n_r - 1) as f64 })
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

#[derive(Clone, Debug)]
pub struct WaveField {
    pub grid: RadialGrid,
    pub u: Vec<Complex64>,
    pub t: f64,
}

impl WaveField {
    pub fn zeros(grid: RadialGrid, t: f64) -> WaveField {
        WaveField { grid, u: vec![Complex64::new(0.0, 0.0); grid.n_r], t }
    }

    pub fn from_fn(grid: RadialGrid, t: f64, f: impl Fn(f64) -> Complex64) -> WaveField {
        let mut u: Vec<Complex64> = (0..grid.n_r).map(|i| f(grid.node(i))).collect();
        u[grid.n_r - 1] = Complex64::new(0.0, 0.0);
        WaveField { grid, u, t }
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max).sqrt()
    }

    /// Interpolated value at `r` (quintic Lagrange, even extension through `r = 0`).
    pub fn sample(&self, r: f64) -> Complex64 {
        let n = self.grid.n_r as isize;
        let x = r.abs() / self.grid.h;
        if x >= (n - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let i0 = x.floor() as isize - 2;
        let t = x - i0 as f64;
        let mut v = Complex64::new(0.0, 0.0);
        for k in 0..6isize {
            let idx = i0 + k;
            let val = if idx >= n { Complex64::new(0.0, 0.0) } else { self.u[idx.unsigned_abs()] };
            let mut w = 1.0;
            for m in 0..6isize {
                if m != k {
                    w *= (t - m as f64) / (k - m) as f64;
                }
            }
            v += val * w;
        }
        v
    }
}

/// Precomputed measure and flux weights of the radial operator.
#[derive(Clone, Debug)]
pub struct RadialSolver {
    pub grid: RadialGrid,
    pub n_dim: usize,
    pub p: f64,
    /// Control-volume measure `∫ r^{N−1} dr / h` around each node.
    pub w: Vec<f64>,
    /// `r^{N−1}` at the half nodes `r_{i+1/2}`.
    pub c: Vec<f64>,
    pub area: f64,
}

impl RadialSolver {
    pub fn new(grid: RadialGrid, n_dim: usize, p: f64) -> Result<RadialSolver> {
        if n_dim == 0 || !(p > 1.0) {
            return Err(Error::Params(format!("need N >= 1 and p > 1, got N = {n_dim}, p = {p}")));
        }
        let h = grid.h;
        let nf = n_dim as f64;
        let n = grid.n_r;
        let mut w = vec![0.0; n];
        w[0] = (h / 2.0).powi(n_dim as i32 - 1) / (2.0 * nf);
        for (i, wi) in w.iter_mut().enumerate().skip(1) {
            let r = grid.node(i);
            *wi = ((r + h / 2.0).powf(nf) - (r - h / 2.0).powf(nf)) / (nf * h);
        }
        let c = (0..n - 1).map(|i| (grid.node(i) + h / 2.0).powi(n_dim as i32 - 1)).collect();
        Ok(RadialSolver { grid, n_dim, p, w, c, area: sphere_area(n_dim) })
    }

    pub fn for_params(grid: RadialGrid, params: &ProblemParams) -> Result<RadialSolver> {
        RadialSolver::new(grid, params.n_dim, params.p)
    }

    fn check(&self, f: &WaveField) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch("field and solver grids differ".into()));
        }
        Ok(())
    }

    /// Applies the discrete `Δ`; the boundary node maps to zero.
    pub fn laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = u.len();
        let h2 = self.grid.h * self.grid.h;
        let zero = Complex64::new(0.0, 0.0);
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    return zero;
                }
                let left = if i > 0 { self.c[i - 1] * (u[i] - u[i - 1]) } else { zero };
                (self.c[i] * (u[i + 1] - u[i]) - left) / (self.w[i] * h2)
            })
            .collect()
    }

    pub fn nonlinear_phase(&self, f: &mut WaveField, dt: f64) {
        let e = (self.p - 1.0) / 2.0;
        for z in f.u.iter_mut() {
            let m = z.norm_sqr();
            let a = if e == 1.0 { m } else { m.powf(e) };
            let th = dt * a;
            if th.abs() < 1e-17 {
                continue;
            }
            let (s, c) = th.sin_cos();
            *z = Complex64::new(z.re * c - z.im * s, z.re * s + z.im * c);
        }
    }

    /// Crank–Nicolson step of `i∂ₜu + Δu = 0` with `u(r_max) = 0`.
    pub fn linear_step(&self, f: &mut WaveField, dt: f64) -> Result<()> {
        let m = self.grid.n_r - 1;
        let k = dt / (2.0 * self.grid.h * self.grid.h);
        let u = &mut f.u;
        // Thomas sweep for (W − ikS)x = (W + ikS)u, overwriting u in place.
        let mut cp = vec![Complex64::new(0.0, 0.0); m];
        let mut prev_cp = Complex64::new(0.0, 0.0);
        let mut prev_d = Complex64::new(0.0, 0.0);
        let mut left = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let cr = self.c[i];
            let cl = if i > 0 { self.c[i - 1] } else { 0.0 };
            let right = cr * (u[i + 1] - u[i]);
            let su = right - left;
            left = right;
            let rhs = self.w[i] * u[i] + Complex64::new(-k * su.im, k * su.re);
            let sub = Complex64::new(0.0, -k * cl);
            let piv = Complex64::new(self.w[i], k * (cr + cl)) - sub * prev_cp;
            let inv = piv.inv();
            if !inv.re.is_finite() || !inv.im.is_finite() {
                return Err(Error::Numerical("singular tridiagonal system".into()));
            }
            prev_cp = if i + 1 < m { Complex64::new(0.0, -k * cr) * inv } else { Complex64::new(0.0, 0.0) };
            cp[i] = prev_cp;
            prev_d = (rhs - sub * prev_d) * inv;
            u[i] = prev_d;
        }
        for i in (0..m - 1).rev() {
            let next = u[i + 1];
            u[i] -= cp[i] * next;
        }
        u[m] = Complex64::new(0.0, 0.0);
        Ok(())
    }

    /// One Strang step: half nonlinear phase, Crank–Nicolson, half nonlinear phase.
    pub fn step(&self, f: &mut WaveField, dt: f64) -> Result<()> {
        self.check(f)?;
        self.nonlinear_phase(f, dt / 2.0);
        self.linear_step(f, dt)?;
        self.nonlinear_phase(f, dt / 2.0);
        f.t += dt;
        if f.u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field at t = {:e}", f.t)));
        }
        Ok(())
    }

    /// Triple-jump composition of three Strang steps, fourth order in `dt`.
    pub fn step4(&self, f: &mut WaveField, dt: f64) -> Result<()> {
        let w1 = 1.0 / (2.0 - 2f64.cbrt());
        let w0 = 1.0 - 2.0 * w1;
        self.step(f, w1 * dt)?;
        self.step(f, w0 * dt)?;
        self.step(f, w1 * dt)
    }

    pub fn mass(&self, f: &WaveField) -> f64 {
        self.area * self.grid.h * f.u.iter().zip(&self.w).map(|(z, w)| w * z.norm_sqr()).sum::<f64>()
    }

    /// `‖∇u‖²_{L²(ℝᴺ)}`.
    pub fn grad_sq(&self, f: &WaveField) -> f64 {
        let h = self.grid.h;
        self.area * f.u.windows(2).zip(&self.c).map(|(z, c)| c * (z[1] - z[0]).norm_sqr()).sum::<f64>() / h
    }

    /// `(M(u), E(u))` with `E = ½∫|∇u|² − 1/(p+1)∫|u|^{p+1}`.
    pub fn conserved_quantities(&self, f: &WaveField) -> (f64, f64) {
        let pot: f64 = f.u.iter().zip(&self.w).map(|(z, w)| w * z.norm().powf(self.p + 1.0)).sum::<f64>();
        let e = 0.5 * self.grad_sq(f) - self.area * self.grid.h * pot / (self.p + 1.0);
        (self.mass(f), e)
    }

    /// `(∫ψ_R|u|², Im∫∇ψ_R·∇u ū)`.
    pub fn localized_virial(&self, f: &WaveField, radius: f64) -> (f64, f64) {
        let h = self.grid.h;
        let chi: f64 = (0..self.grid.n_r).map(|i| self.w[i] * virial_weight(self.grid.node(i), radius).0 * f.u[i].norm_sqr()).sum();
        let flux: f64 = (0..self.grid.n_r - 1)
            .map(|i| {
                let rm = self.grid.node(i) + h / 2.0;
                let du = (f.u[i + 1] - f.u[i]) / h;
                let um = (f.u[i + 1] + f.u[i]) / 2.0;
                self.c[i] * virial_weight(rm, radius).1 * (du * um.conj()).im
            })
            .sum();
        (self.area * h * chi, self.area * h * flux)
    }

    pub fn diagnostics(&self, f: &WaveField, virial_radius: f64) -> DiagnosticsRow {
        let (mass, energy) = self.conserved_quantities(f);
        let (virial_chi, virial_flux) = self.localized_virial(f, virial_radius);
        let (imax, sup_amp) = f.u.iter().enumerate().map(|(i, z)| (i, z.norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let mut r_est = self.grid.node(imax);
        if imax > 0 && imax + 1 < self.grid.n_r {
            let (a, b, c) = (f.u[imax - 1].norm_sqr(), f.u[imax].norm_sqr(), f.u[imax + 1].norm_sqr());
            let den = a - 2.0 * b + c;
            if den < 0.0 {
                r_est += 0.5 * self.grid.h * (a - c) / den;
            }
        }
        let lambda_est = if sup_amp > 0.0 { (q_value(self.p, 0.0) / sup_amp).powf((self.p - 1.0) / 2.0) } else { f64::INFINITY };
        DiagnosticsRow { t: f.t, mass, energy, grad_norm: self.grad_sq(f).sqrt(), sup_amp, virial_chi, virial_flux, r_est, lambda_est }
    }
}

/// Coefficients of the blend `ψ(2+σ) = Σ aₖσᵏ`, `σ ∈ [0,1]`, matching `x²/2` to second
/// order at `x = 2` and zero to second order at `x = 3`.
pub const VIRIAL_BLEND: [f64; 6] = [2.0, 2.0, 0.5, -33.5, 47.5, -18.5];

/// `ψ(x)`, `ψ'(x)`: `x²/2` on `[0,2]`, the quintic blend on `[2,3]`, zero beyond.
pub fn virial_psi(x: f64) -> (f64, f64) {
    let x = x.abs();
    if x <= 2.0 {
        return (x * x / 2.0, x);
    }
    if x >= 3.0 {
        return (0.0, 0.0);
    }
    let s = x - 2.0;
    let a = VIRIAL_BLEND;
    let v = a[0] + s * (a[1] + s * (a[2] + s * (a[3] + s * (a[4] + s * a[5]))));
    let d = a[1] + s * (2.0 * a[2] + s * (3.0 * a[3] + s * (4.0 * a[4] + s * 5.0 * a[5])));
    (v, d)
}

/// `ψ_R(r) = R²ψ(r/R)` and its radial derivative.
pub fn virial_weight(r: f64, radius: f64) -> (f64, f64) {
    let (v, d) = virial_psi(r / radius);
    (radius * radius * v, radius * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub sup_amp: f64,
    pub virial_chi: f64,
    pub virial_flux: f64,
    pub r_est: f64,
    pub lambda_est: f64,
}

pub fn write_diagnostics_csv(rows: &[DiagnosticsRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,mass,energy,grad_norm,sup_amp,virial_chi,virial_flux,r_est,lambda_est")?;
    for r in rows {
        writeln!(
            f,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.t, r.mass, r.energy, r.grad_norm, r.sup_amp, r.virial_chi, r.virial_flux, r.r_est, r.lambda_est
        )?;
    }
    Ok(())
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", ln + 1))))
            .collect::<Result<_>>()?;
        if v.len() != 9 {
            return Err(Error::Format(format!("line {}: expected 9 columns", ln + 1)));
        }
        rows.push(DiagnosticsRow {
            t: v[0],
            mass: v[1],
            energy: v[2],
            grad_norm: v[3],
            sup_amp: v[4],
            virial_chi: v[5],
            virial_flux: v[6],
            r_est: v[7],
            lambda_est: v[8],
        });
    }
    Ok(rows)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"RLSNAP01";

/// Binary little-endian snapshot: magic, `n_r`, `r_max`, `t`, then `(re, im)` per node.
pub fn write_snapshot(f: &WaveField, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(32 + 16 * f.u.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(f.grid.n_r as u64).to_le_bytes());
    out.extend_from_slice(&f.grid.r_max.to_le_bytes());
    out.extend_from_slice(&f.t.to_le_bytes());
    for z in &f.u {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<WaveField> {
    let bytes = std::fs::read(path)?;
    let bad = || Error::Format(format!("{} is not a snapshot file", path.display()));
    if bytes.len() < 32 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad());
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().expect("8 bytes") };
    let n_r = u64::from_le_bytes(word(1)) as usize;
    if bytes.len() != 32 + 16 * n_r {
        return Err(bad());
    }
    let grid = RadialGrid::new(f64::from_le_bytes(word(2)), n_r)?;
    let t = f64::from_le_bytes(word(3));
    let u = (0..n_r).map(|i| Complex64::new(f64::from_le_bytes(word(4 + 2 * i)), f64::from_le_bytes(word(5 + 2 * i)))).collect();
    Ok(WaveField { grid, u, t })
}

/// `u(r) = λ^{−2/(p−1)} Q_{b,β̃}((r − r(t̄))/λ) e^{iγ}` at `t = m.t`.
pub fn build_initial_data(exp: &ProfileExpansion, m: &ModState, grid: RadialGrid) -> Result<WaveField> {
    if !(m.lambda > 0.0 && m.r > 0.0 && m.b > 0.0) {
        return Err(Error::Input("ring data needs λ, r, b > 0".into()));
    }
    let inner = m.r - 2.0 * m.lambda / m.b.sqrt();
    if inner <= 0.0 {
        return Err(Error::Input(format!("cutoff support reaches r = 0 (inner edge {inner:e}); decrease b or λ/r")));
    }
    let frozen = ProfileSampler::new(exp).freeze(m.b, m.btilde);
    let amp = m.lambda.powf(-exp.params.amp_exp());
    let phase = Complex64::from_polar(1.0, m.gamma);
    let f = WaveField::from_fn(grid, m.t, |r| amp * frozen.qb((r - m.r) / m.lambda) * phase);
    let edge = boundary_level(&f);
    if edge > 1e-8 * f.sup() {
        return Err(Error::Input(format!("profile support leaves the grid (|u| near r_max = {edge:e}); enlarge r_max")));
    }
    Ok(f)
}

/// Largest `|u|` over the outermost 1% of the grid.
pub fn boundary_level(f: &WaveField) -> f64 {
    let n = f.grid.n_r;
    f.u[n - 1 - (n / 100).max(1)..].iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_r: usize,
    /// `r_max = r_max_factor · r(t̄)`.
    pub r_max_factor: f64,
    /// `dt = min(dt_max, cfl / max|u|^{p−1})`.
    pub cfl: f64,
    pub dt_max: f64,
    /// Stop once `‖∇u‖` has grown by this factor.
    pub amplification: f64,
    /// Stop once `λ_est < lambda_cells · h`.
    pub lambda_cells: f64,
    pub max_steps: usize,
    /// Diagnostics are recorded every this many steps.
    pub record_every: usize,
    /// Field snapshots kept at geometrically spaced amplification levels.
    pub snapshots: usize,
    /// Snapshots taken per level, `snapshot_stride` steps apart.
    pub snapshot_group: usize,
    pub snapshot_stride: usize,
    /// Virial radius as a fraction of `r_max`.
    pub virial_fraction: f64,
    /// Time order of the splitting, 2 or 4.
    pub order: u8,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            n_r: 1 << 16,
            r_max_factor: 4.0,
            cfl: 0.05,
            dt_max: f64::INFINITY,
            amplification: 30.0,
            lambda_cells: 8.0,
            max_steps: 2_000_000,
            record_every: 1,
            snapshots: 0,
            snapshot_group: 1,
            snapshot_stride: 1,
            virial_fraction: 0.3,
            order: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Amplification,
    Resolution,
    MaxSteps,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimReport {
    pub t_start: f64,
    pub t_est: f64,
    pub steps: usize,
    pub stop: StopReason,
    pub amplification: f64,
    pub rate: PowerFit,
    pub radius: PowerFit,
    pub scale: PowerFit,
    pub expected: [f64; 3],
    pub mass_drift: f64,
    /// Largest `|E(t) − E(t̄)| / ‖∇u(t)‖²`.
    pub energy_drift: f64,
    pub r_max: f64,
    pub h: f64,
}

#[derive(Clone, Debug)]
pub struct SimRun {
    pub rows: Vec<DiagnosticsRow>,
    pub snapshots: Vec<WaveField>,
    pub report: SimReport,
}

/// Launches the ring data of `m` and steps until the gradient amplification, resolution or
/// step budget is reached.
pub fn run_to_blowup(exp: &ProfileExpansion, m: &ModState, opts: &SimOptions) -> Result<SimRun> {
    let params = &exp.params;
    if opts.order != 2 && opts.order != 4 {
        return Err(Error::Input(format!("splitting order must be 2 or 4, got {}", opts.order)));
    }
    let grid = RadialGrid::new(opts.r_max_factor * m.r, opts.n_r)?;
    let solver = RadialSolver::for_params(grid, params)?;
    let mut f = build_initial_data(exp, m, grid)?;
    let radius = opts.virial_fraction * grid.r_max;
    let first = solver.diagnostics(&f, radius);
    let g0 = first.grad_norm;
    let mut rows = vec![first];
    let mut snapshots = Vec::new();
    let levels: Vec<f64> = (0..opts.snapshots)
        .map(|i| if opts.snapshots == 1 { 1.0 } else { opts.amplification.powf(i as f64 / (opts.snapshots - 1) as f64) })
        .collect();
    let mut next_snap = 0;
    let mut pending = 0;
    let mut since = 0;
    let group = opts.snapshot_group.max(1);
    if next_snap < levels.len() && levels[0] <= 1.0 {
        snapshots.push(f.clone());
        next_snap += 1;
        pending = group - 1;
    }
    let e = params.p - 1.0;
    let mut steps = 0;
    let mut sup = f.sup();
    let stop = loop {
        if steps >= opts.max_steps {
            break StopReason::MaxSteps;
        }
        let dt = opts.dt_max.min(opts.cfl / sup.powf(e));
        if opts.order == 4 {
            solver.step4(&mut f, dt)?;
        } else {
            solver.step(&mut f, dt)?;
        }
        steps += 1;
        let last = steps % opts.record_every.max(1) == 0;
        let amp = solver.grad_sq(&f).sqrt() / g0;
        if pending > 0 {
            since += 1;
            if since == opts.snapshot_stride.max(1) {
                snapshots.push(f.clone());
                pending -= 1;
                since = 0;
            }
        } else if next_snap < levels.len() && amp >= levels[next_snap] {
            snapshots.push(f.clone());
            while next_snap < levels.len() && amp >= levels[next_snap] {
                next_snap += 1;
            }
            pending = group - 1;
            since = 0;
        }
        let done_amp = amp >= opts.amplification;
        sup = f.sup();
        let lam = (q_value(params.p, 0.0) / sup).powf(e / 2.0);
        let done_res = lam < opts.lambda_cells * grid.h;
        if last || done_amp || done_res {
            let edge = boundary_level(&f);
            if edge > 1e-8 * sup {
                return Err(Error::Numerical(format!("boundary contamination at t = {:e} (|u| = {edge:e}); enlarge r_max", f.t)));
            }
            rows.push(solver.diagnostics(&f, radius));
        }
        if done_amp {
            break StopReason::Amplification;
        }
        if done_res {
            break StopReason::Resolution;
        }
    };
    let report = analyze_run(params, &rows, stop, steps, grid)?;
    Ok(SimRun { rows, snapshots, report })
}

/// `T` from a linear fit of `‖∇u‖^{−(1+α)}` against `t` over the last half of the rows.
pub fn estimate_blowup_time(rows: &[DiagnosticsRow], alpha: f64) -> Result<f64> {
    let tail = &rows[rows.len() / 2..];
    let t: Vec<f64> = tail.iter().map(|r| r.t).collect();
    let y: Vec<f64> = tail.iter().map(|r| r.grad_norm.powf(-(1.0 + alpha))).collect();
    let fit = linear_fit(&t, &y)?;
    if !(fit.slope < 0.0) {
        return Err(Error::Numerical("gradient is not growing; no blow-up time".into()));
    }
    Ok(-fit.intercept / fit.slope)
}

fn analyze_run(params: &ProblemParams, rows: &[DiagnosticsRow], stop: StopReason, steps: usize, grid: RadialGrid) -> Result<SimReport> {
    if rows.len() < 8 {
        return Err(Error::Numerical(format!("only {} diagnostic rows", rows.len())));
    }
    let a = params.alpha;
    let t_est = estimate_blowup_time(rows, a)?;
    let dt: Vec<f64> = rows.iter().map(|r| t_est - r.t).collect();
    let w = fit_window(rows, t_est);
    let col = |f: fn(&DiagnosticsRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let m0 = rows[0].mass;
    Ok(SimReport {
        t_start: rows[0].t,
        t_est,
        steps,
        stop,
        amplification: rows.last().map_or(1.0, |r| r.grad_norm) / rows[0].grad_norm,
        rate: power_law_fit(&dt, &col(|r| r.grad_norm), w)?,
        radius: power_law_fit(&dt, &col(|r| r.r_est), w)?,
        scale: power_law_fit(&dt, &col(|r| r.lambda_est), w)?,
        expected: [-1.0 / (1.0 + a), a / (1.0 + a), 1.0 / (1.0 + a)],
        mass_drift: rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max),
        energy_drift: rows.iter().map(|r| (r.energy - rows[0].energy).abs() / r.grad_norm.powi(2)).fold(0.0, f64::max),
        r_max: grid.r_max,
        h: grid.h,
    })
}

/// `T − t` window covering the rows whose gradient has grown by at least
/// `min(2.5, A^{1/3})`, `A` the total amplification.
fn fit_window(rows: &[DiagnosticsRow], t_est: f64) -> (f64, f64) {
    let g0 = rows[0].grad_norm;
    let last = rows.last().map_or(g0, |r| r.grad_norm);
    let skip = (last / g0).cbrt().min(2.5);
    let lo = t_est - rows[rows.len() - 1].t;
    let hi = rows.iter().find(|r| r.grad_norm >= skip * g0).map_or(t_est - rows[0].t, |r| t_est - r.t);
    (lo.max(f64::MIN_POSITIVE), hi)
}

/// `ratio(t) = ∫_t^T (T−τ)‖∇u‖² dτ / (T−t)^{2α/(1+α)}`, the part beyond the last row
/// closed with a power law fitted to the last quarter.
pub fn check_virial_bound(rows: &[DiagnosticsRow], t_est: f64, alpha: f64) -> Result<Vec<(f64, f64)>> {
    let n = rows.len();
    if n < 4 {
        return Err(Error::Input(format!("need at least 4 samples, got {n}")));
    }
    if rows.iter().all(|r| r.grad_norm == 0.0) {
        return Ok(rows.iter().map(|r| (r.t, 0.0)).collect());
    }
    let dt: Vec<f64> = rows.iter().map(|r| t_est - r.t).collect();
    if dt.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Input("samples must precede the blow-up time".into()));
    }
    let g2: Vec<f64> = rows.iter().map(|r| r.grad_norm * r.grad_norm).collect();
    let q = &dt[3 * n / 4..];
    let fit = power_law_fit(q, &g2[3 * n / 4..], (q[q.len() - 1], q[0]))?;
    let e = fit.exponent + 2.0;
    if !(e > 0.0) {
        return Err(Error::Numerical(format!("tail integrand exponent {} is not integrable", e - 1.0)));
    }
    let mut acc = fit.prefactor * dt[n - 1].powf(e) / e;
    let mut out = vec![(0.0, 0.0); n];
    let power = 2.0 * alpha / (1.0 + alpha);
    out[n - 1] = (rows[n - 1].t, acc / dt[n - 1].powf(power));
    for i in (0..n - 1).rev() {
        acc += 0.5 * (rows[i + 1].t - rows[i].t) * (dt[i] * g2[i] + dt[i + 1] * g2[i + 1]);
        out[i] = (rows[i].t, acc / dt[i].powf(power));
    }
    Ok(out)
}
