//! Off-grid evaluation of the profile by local quintic interpolation of the correction fields.

use num_complex::Complex64;

use super::residual::zeta;
use super::ProfileExpansion;
use crate::groundstate::{q_value, qp_value};
use crate::numerics::Grid1D;

#[derive(Clone, Debug)]
pub struct ProfileSampler {
    pub p: f64,
    pub beta_inf: f64,
    pub grid: Grid1D,
    /// `(j, l, T + iS)` for every built order.
    terms: Vec<(usize, usize, Vec<Complex64>)>,
}

/// The profile at fixed `(b, β̃)`: `P − Q` summed on the grid.
#[derive(Clone, Debug)]
pub struct FrozenProfile {
    pub p: f64,
    pub b: f64,
    pub bt: f64,
    pub beta: f64,
    pub grid: Grid1D,
    pub correction: Vec<Complex64>,
}

fn lagrange6(grid: &Grid1D, v: &[Complex64], y: f64) -> (Complex64, Complex64) {
    let n = v.len();
    let x = (y - grid.y_min) / grid.h;
    let i0 = (x.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    let t = x - i0 as f64;
    let mut val = Complex64::new(0.0, 0.0);
    let mut der = Complex64::new(0.0, 0.0);
    for k in 0..6 {
        let mut w = 1.0;
        let mut dw = 0.0;
        for m in 0..6 {
            if m == k {
                continue;
            }
            let den = k as f64 - m as f64;
            let mut prod = 1.0 / den;
            for q in 0..6 {
                if q != k && q != m {
                    prod *= (t - q as f64) / (k as f64 - q as f64);
                }
            }
            dw += prod;
            w *= (t - m as f64) / den;
        }
        val += v[i0 + k] * w;
        der += v[i0 + k] * dw;
    }
    (val, der / grid.h)
}

impl ProfileSampler {
    pub fn new(exp: &ProfileExpansion) -> ProfileSampler {
        let terms = exp
            .t
            .iter()
            .map(|(&(j, l), t)| {
                let s = &exp.s[&(j, l)];
                (j, l, t.values.iter().zip(&s.values).map(|(&a, &b)| Complex64::new(a, b)).collect())
            })
            .collect();
        ProfileSampler { p: exp.params.p, beta_inf: exp.params.beta_inf, grid: exp.grid(), terms }
    }

    pub fn freeze(&self, b: f64, bt: f64) -> FrozenProfile {
        let mut correction = vec![Complex64::new(0.0, 0.0); self.grid.n];
        for (j, l, f) in &self.terms {
            let w = b.powi(*j as i32) * bt.powi(*l as i32);
            if w == 0.0 {
                continue;
            }
            for (c, v) in correction.iter_mut().zip(f) {
                *c += v * w;
            }
        }
        FrozenProfile { p: self.p, b, bt, beta: self.beta_inf + bt, grid: self.grid, correction }
    }
}

impl FrozenProfile {
    fn inside(&self, y: f64) -> bool {
        y >= self.grid.y_min && y <= self.grid.y_max
    }

    /// `P_{b,β̃}(y)` and its `y`-derivative.
    pub fn p_and_dp(&self, y: f64) -> (Complex64, Complex64) {
        let q = Complex64::new(q_value(self.p, y), 0.0);
        let qp = Complex64::new(qp_value(self.p, y), 0.0);
        if !self.inside(y) {
            return (q, qp);
        }
        let (c, dc) = lagrange6(&self.grid, &self.correction, y);
        (q + c, qp + dc)
    }

    /// `Q_{b,β̃}(y) = ζ_b(y) P(y) e^{−iβy − iby²/4}`.
    pub fn qb(&self, y: f64) -> Complex64 {
        self.qb_and_dy(y).0
    }

    /// `Q_{b,β̃}` and its `y`-derivative.
    pub fn qb_and_dy(&self, y: f64) -> (Complex64, Complex64) {
        let sb = self.b.sqrt();
        let (z, z1, _) = zeta(sb * y);
        if z == 0.0 {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let (p, dp) = self.p_and_dp(y);
        let ph = Complex64::from_polar(1.0, -self.beta * y - self.b * y * y / 4.0);
        let dphase = Complex64::new(0.0, -self.beta - self.b * y / 2.0);
        let v = z * p * ph;
        let d = (sb * z1 * p + z * dp) * ph + v * dphase;
        (v, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_is_exact_on_quintics() {
        let grid = Grid1D::new(-1.0, 1.0, 41).unwrap();
        let f = |y: f64| 1.0 - 2.0 * y + 0.5 * y.powi(3) + 0.25 * y.powi(5);
        let df = |y: f64| -2.0 + 1.5 * y * y + 1.25 * y.powi(4);
        let v: Vec<Complex64> = grid.nodes().into_iter().map(|y| Complex64::new(f(y), -f(y))).collect();
        for &y in &[-0.99, -0.313, 0.0, 0.4471, 0.98] {
            let (a, d) = lagrange6(&grid, &v, y);
            assert!((a.re - f(y)).abs() < 1e-13 && (a.im + f(y)).abs() < 1e-13);
            assert!((d.re - df(y)).abs() < 1e-10);
        }
    }
}
