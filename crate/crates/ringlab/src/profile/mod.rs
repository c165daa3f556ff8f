//! Slow-modulated ring profiles `P_{b,β̃} = Q + Σ b^j β̃^l (T_{j,l} + i S_{j,l})`, the
//! modulation polynomials `P₁`, `P₂`, the assembled `Q_{b,β̃}` and its residual `Ψ`.

mod build;
mod io;
mod residual;
mod sampler;
pub mod series;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dd::{cdd_to_c64, Dd};
use crate::error::{Error, Result};
use crate::groundstate::{GroundState, ProblemParams};
use crate::numerics::{Grid1D, RealField};

pub use build::StepReport;
pub use residual::{assemble_qb, cutoff_zeta, residual_psi, residual_psi_with, zeta, ResidualOptions};
pub use sampler::ProfileSampler;
pub use series::{series_add, series_invert_unit, series_mul, series_scale, FieldSeries, ScalarSeries};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Stop the recursion at this total degree instead of `k − 1`.
    pub max_degree: Option<usize>,
}

/// The constructed expansion. Double-double coefficients are kept alongside the
/// rounded fields so that residuals can be evaluated below double precision.
#[derive(Clone, Debug)]
pub struct ProfileExpansion {
    pub params: ProblemParams,
    pub gs: GroundState,
    pub degree: usize,
    pub t: BTreeMap<(usize, usize), RealField>,
    pub s: BTreeMap<(usize, usize), RealField>,
    pub c1: BTreeMap<(usize, usize), f64>,
    pub c2: BTreeMap<(usize, usize), f64>,
    pub reports: Vec<StepReport>,
    /// Rayleigh quotients of the discrete near-null vectors of `L₊` and `L₋`.
    pub kernel_eig: (f64, f64),
    pub(crate) pser: FieldSeries,
    pub(crate) p1: ScalarSeries,
    pub(crate) p2: ScalarSeries,
}

pub fn build_expansion(params: &ProblemParams, gs: &GroundState) -> Result<ProfileExpansion> {
    build_expansion_with(params, gs, BuildOptions::default())
}

pub fn build_expansion_with(params: &ProblemParams, gs: &GroundState, opts: BuildOptions) -> Result<ProfileExpansion> {
    let grid = gs.grid();
    if grid.y_min >= 0.0 || grid.y_max <= 0.0 {
        return Err(Error::Input("profile grid must straddle y = 0".into()));
    }
    let degree = opts.max_degree.unwrap_or(params.k - 1).min(params.k - 1);
    if degree == 0 {
        return Err(Error::Params("expansion degree must be at least 1".into()));
    }
    let gs = gs.with_params(params.clone());
    let core = build::Core::new(params, grid);
    let rec = build::run(&core, degree)?;
    Ok(ProfileExpansion::from_parts(params.clone(), gs, rec.pser, rec.p1, rec.p2, rec.reports, rec.kernel_eig))
}

impl ProfileExpansion {
    pub(crate) fn from_parts(
        params: ProblemParams,
        gs: GroundState,
        pser: FieldSeries,
        p1: ScalarSeries,
        p2: ScalarSeries,
        reports: Vec<StepReport>,
        kernel_eig: (f64, f64),
    ) -> ProfileExpansion {
        let grid = gs.grid();
        let mut t = BTreeMap::new();
        let mut s = BTreeMap::new();
        let mut c1 = BTreeMap::new();
        let mut c2 = BTreeMap::new();
        for m in 1..=pser.deg {
            for (j, l) in series::monomials_of_degree(m) {
                let f = pser.coeff(grid, j, l);
                t.insert((j, l), f.re());
                s.insert((j, l), f.im());
                c1.insert((j, l), p1.get(j, l).to_f64());
                c2.insert((j, l), p2.get(j, l).to_f64());
            }
        }
        ProfileExpansion { params, gs, degree: pser.deg, t, s, c1, c2, reports, kernel_eig, pser, p1, p2 }
    }

    pub fn grid(&self) -> Grid1D {
        self.gs.grid()
    }

    pub fn c1(&self, j: usize, l: usize) -> f64 {
        self.c1.get(&(j, l)).copied().unwrap_or(0.0)
    }

    pub fn c2(&self, j: usize, l: usize) -> f64 {
        self.c2.get(&(j, l)).copied().unwrap_or(0.0)
    }

    /// `P₁(b, β̃)`.
    pub fn eval_p1(&self, b: f64, bt: f64) -> f64 {
        self.p1.eval(Dd::new(b), Dd::new(bt)).to_f64()
    }

    /// `P₂(b, β̃)`.
    pub fn eval_p2(&self, b: f64, bt: f64) -> f64 {
        self.p2.eval(Dd::new(b), Dd::new(bt)).to_f64()
    }

    /// Partial derivatives `(∂_b, ∂_β̃)` of `P₁` and `P₂`.
    pub fn grad_p(&self, b: f64, bt: f64) -> ([f64; 2], [f64; 2]) {
        let g = |s: &ScalarSeries| {
            let (mut db, mut dt) = (0.0, 0.0);
            for (i, &c) in s.c.iter().enumerate() {
                let (j, l) = series::monomial(i);
                let c = c.to_f64();
                if j > 0 {
                    db += c * j as f64 * b.powi(j as i32 - 1) * bt.powi(l as i32);
                }
                if l > 0 {
                    dt += c * l as f64 * b.powi(j as i32) * bt.powi(l as i32 - 1);
                }
            }
            [db, dt]
        };
        (g(&self.p1), g(&self.p2))
    }

    pub fn p1_table(&self) -> &ScalarSeries {
        &self.p1
    }

    pub fn p2_table(&self) -> &ScalarSeries {
        &self.p2
    }

    /// The series `P` with double-double coefficients.
    pub fn series(&self) -> &FieldSeries {
        &self.pser
    }

    /// Largest homogeneous part of the profile equation after substituting the built series,
    /// relative to the size of the profile coefficients at that order.
    pub fn reconstruction_defect(&self) -> Result<f64> {
        let core = build::Core::new(&self.params, self.grid());
        let e = build::equation_series(&core, &self.pser, &self.p1, &self.p2, 1)?;
        let mut worst = 0.0f64;
        for m in 1..=self.degree {
            for (j, l) in series::monomials_of_degree(m) {
                let scale = 1.0 + self.pser.max_abs(j, l);
                worst = worst.max(e.max_abs(j, l) / scale);
            }
        }
        Ok(worst)
    }

    /// Sup over `a ≤ |y| ≤ b` of `|f(y)| e^{|y|} |y|^{−2(j+l)}` for `T_{j,l}` and `S_{j,l}`.
    pub fn decay_constant(&self, j: usize, l: usize, window: (f64, f64)) -> f64 {
        let pow = 2 * (j + l);
        let sup = |f: &RealField| {
            f.grid
                .nodes()
                .into_iter()
                .zip(&f.values)
                .filter(|(y, _)| y.abs() >= window.0 && y.abs() <= window.1)
                .map(|(y, v)| v.abs() * y.abs().exp() / y.abs().powi(pow as i32))
                .fold(0.0f64, f64::max)
        };
        let t = self.t.get(&(j, l)).map_or(0.0, sup);
        let s = self.s.get(&(j, l)).map_or(0.0, sup);
        t.max(s)
    }
}

/// Series of `|P|^{p−1}P` for a series whose constant field is the ground state of `gs`.
pub fn nonlinearity_series(p: &FieldSeries, gs: &GroundState) -> Result<FieldSeries> {
    let grid = gs.grid();
    if p.n != grid.n {
        return Err(Error::GridMismatch(format!("series on {} nodes, ground state on {}", p.n, grid.n)));
    }
    let core = build::Core::new(&gs.params, grid);
    let Some(c0) = &p.c[0] else {
        return Err(Error::Input("constant term must be Q".into()));
    };
    let off = c0.iter().zip(&core.q).map(|(z, q)| cdd_to_c64(*z - num_complex::Complex::new(*q, Dd::ZERO)).norm());
    if off.fold(0.0f64, f64::max) > 1e-12 {
        return Err(Error::Input("constant term must be Q".into()));
    }
    build::nonlinearity(&core, p, 0)
}

/// The series `Q + 0` of the given degree, with `Q` evaluated in double-double.
pub fn ground_series(gs: &GroundState, deg: usize) -> FieldSeries {
    let core = build::Core::new(&gs.params, gs.grid());
    FieldSeries::constant(deg, core.q.iter().map(|&q| num_complex::Complex::new(q, Dd::ZERO)).collect())
}

/// Relative odd/even parts: `(‖f(y) − σ f(−y)‖ / ‖f‖)` for the parity `σ = ±1`.
pub fn parity_defect(f: &RealField, sigma: f64) -> f64 {
    let n = f.values.len();
    let nrm = f.max_abs();
    if nrm == 0.0 {
        return 0.0;
    }
    (0..n).map(|i| (f.values[i] - sigma * f.values[n - 1 - i]).abs()).fold(0.0, f64::max) / nrm
}

pub use io::{load_expansion, save_expansion, ExpansionMeta};

#[cfg(test)]
mod tests;
