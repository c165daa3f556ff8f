//! The one-dimensional ground state `Q'' − Q + Q^p = 0`, its derivatives and
//! the scaling generator `ΛQ = 2/(p−1)·Q + yQ'`.

use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::numerics::{derivative_real, integrate, Grid1D, RealField};

/// The (N, p) pairs exercised by the identity and constant suites.
pub const TEST_MATRIX: [(usize, f64); 4] = [(3, 3.0), (2, 4.0), (4, 2.5), (5, 2.0)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub p: f64,
    pub alpha: f64,
    pub beta_inf: f64,
    pub s_c: f64,
    pub k: usize,
}

impl ProblemParams {
    /// Exponent `2/(p−1)` of the amplitude scaling.
    pub fn amp_exp(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    /// `|S^{N−1}|`
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.n_dim)
    }

    /// Overrides the expansion order without the bootstrap admissibility bound on `k`.
    pub fn with_expansion_order(mut self, k: usize) -> ProblemParams {
        self.k = k;
        self
    }
}

pub fn sphere_area(n: usize) -> f64 {
    // |S^{n-1}| = 2 π^{n/2} / Γ(n/2)
    let half = n as f64 / 2.0;
    let gamma_half = if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product::<f64>()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < half - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * std::f64::consts::PI.powf(half) / gamma_half
}

pub fn make_params(n_dim: usize, p: f64, k: Option<usize>) -> Result<ProblemParams> {
    if n_dim < 2 {
        return Err(Error::Params("N >= 2 violated".into()));
    }
    if !p.is_finite() {
        return Err(Error::Params("p must be finite".into()));
    }
    let nf = n_dim as f64;
    if p <= 1.0 + 4.0 / nf {
        return Err(Error::Params("p > 1 + 4/N violated".into()));
    }
    let upper = if n_dim == 2 { 5.0 } else { ((nf + 2.0) / (nf - 2.0)).min(5.0) };
    if p >= upper {
        return Err(Error::Params("p < min((N+2)/(N-2),5) violated".into()));
    }
    let alpha = (5.0 - p) / ((p - 1.0) * (nf - 1.0));
    let beta_inf = ((5.0 - p) / (p + 3.0)).sqrt();
    let s_c = nf / 2.0 - 2.0 / (p - 1.0);
    let kmin = 2.0 / (1.0 - alpha) + 1.0;
    let k = match k {
        Some(k) => {
            if k < 5 {
                return Err(Error::Params("k >= 5 violated".into()));
            }
            if (k as f64) <= kmin {
                return Err(Error::Params(format!("k > 2/(1-alpha)+1 = {kmin:.6} violated")));
            }
            k
        }
        None => 5usize.max((2.0 / (1.0 - alpha)).ceil() as usize + 2),
    };
    Ok(ProblemParams { n_dim, p, alpha, beta_inf, s_c, k })
}

fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

pub fn q_amplitude(p: f64) -> f64 {
    ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0))
}

pub fn q_value(p: f64, y: f64) -> f64 {
    q_amplitude(p) * sech(0.5 * (p - 1.0) * y).powf(2.0 / (p - 1.0))
}

pub fn qp_value(p: f64, y: f64) -> f64 {
    -q_value(p, y) * (0.5 * (p - 1.0) * y).tanh()
}

pub fn lam_q_value(p: f64, y: f64) -> f64 {
    2.0 / (p - 1.0) * q_value(p, y) + y * qp_value(p, y)
}

/// `(Q, Q')` in double-double precision.
pub fn q_dd(p: f64, y: Dd) -> (Dd, Dd) {
    let x = y.mul_f64(0.5 * (p - 1.0));
    let amp = Dd::new((p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
    let s = x.sech();
    let e = 2.0 / (p - 1.0);
    let q = if (e - 1.0).abs() < 1e-15 {
        amp * s
    } else if (e - 2.0).abs() < 1e-15 {
        amp * s.sqr()
    } else {
        amp * s.powf(e)
    };
    (q, -(q * x.tanh()))
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub params: ProblemParams,
    pub q: RealField,
    pub qp: RealField,
    pub lam_q: RealField,
    pub y_q: RealField,
}

pub fn eval_groundstate(params: &ProblemParams, grid: Grid1D) -> GroundState {
    let p = params.p;
    GroundState {
        params: *params,
        q: RealField::from_fn(grid, |y| q_value(p, y)),
        qp: RealField::from_fn(grid, |y| qp_value(p, y)),
        lam_q: RealField::from_fn(grid, |y| lam_q_value(p, y)),
        y_q: RealField::from_fn(grid, |y| y * q_value(p, y)),
    }
}

impl GroundState {
    pub fn grid(&self) -> Grid1D {
        self.q.grid
    }

    /// Pointwise `Q'' − Q + Q^p` with `Q''` differentiated from the closed form.
    pub fn equation_residual(&self) -> RealField {
        let p = self.params.p;
        let kappa = 0.5 * (p - 1.0);
        self.q.map(|y, q| {
            let t = (kappa * y).tanh();
            let qpp = q * (t * t - kappa * (1.0 - t * t));
            qpp - q + q.powf(p)
        })
    }

    /// Same residual with a finite-difference `Q''`.
    pub fn equation_residual_fd(&self) -> RealField {
        let qpp = derivative_real(&self.q, 2).expect("grid has stencil width");
        let p = self.params.p;
        qpp.zip_with(&self.q, |d2, q| d2 - q + q.powf(p))
    }

    /// Same ground state with the expansion order replaced.
    pub fn with_params(&self, params: ProblemParams) -> GroundState {
        GroundState { params, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    #[serde(rename = "intQ2")]
    pub int_q2: f64,
    #[serde(rename = "intQp2")]
    pub int_qp2: f64,
    #[serde(rename = "QLamQ")]
    pub q_lam_q: f64,
    pub pohozaev_defect: f64,
    #[serde(rename = "lamQ_defect")]
    pub lam_q_defect: f64,
}

pub fn check_identities(gs: &GroundState) -> IdentityReport {
    let p = gs.params.p;
    let int_q2 = integrate(&gs.q.zip_with(&gs.q, |a, b| a * b)).expect("finite");
    let int_qp2 = integrate(&gs.qp.zip_with(&gs.qp, |a, b| a * b)).expect("finite");
    let q_lam_q = integrate(&gs.q.zip_with(&gs.lam_q, |a, b| a * b)).expect("finite");
    let pohozaev_defect = (int_q2 - (p + 3.0) / (p - 1.0) * int_qp2).abs() / int_q2;
    let lam_q_defect = (q_lam_q - (5.0 - p) / (2.0 * (p - 1.0)) * int_q2).abs() / q_lam_q.abs();
    IdentityReport { int_q2, int_qp2, q_lam_q, pohozaev_defect, lam_q_defect }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn params_three_three() {
        let pp = make_params(3, 3.0, None).unwrap();
        assert!((pp.alpha - 0.5).abs() < 1e-15);
        assert!((pp.beta_inf - 0.577_350_3).abs() < 1e-7);
        assert!((pp.s_c - 0.5).abs() < 1e-15);
        assert_eq!(pp.k, 6);
    }

    #[test]
    fn params_two_four() {
        let pp = make_params(2, 4.0, None).unwrap();
        assert!((pp.alpha - 1.0 / 3.0).abs() < 1e-15);
        assert!((pp.beta_inf - 0.377_964_5).abs() < 1e-7);
        assert!((pp.s_c - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn params_reject_energy_critical_edge() {
        let e = make_params(3, 5.0, None).unwrap_err();
        assert!(e.to_string().contains("p < min((N+2)/(N-2),5) violated"), "{e}");
        assert!(make_params(3, 2.0, None).unwrap_err().to_string().contains("p > 1 + 4/N"));
        assert!(make_params(3, 3.0, Some(4)).is_err());
        assert!(make_params(3, 3.0, Some(5)).is_err());
        assert!(make_params(3, 3.0, Some(7)).is_ok());
    }

    #[test]
    fn sphere_areas() {
        let pi = std::f64::consts::PI;
        assert!((sphere_area(2) - 2.0 * pi).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * pi).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * pi * pi).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * pi * pi / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ground_state_values_p3() {
        assert!((q_value(3.0, 0.0) - 2f64.sqrt()).abs() < 1e-15);
        let (s, t) = (1.0 / 1f64.cosh(), 1f64.tanh());
        assert!((q_value(3.0, 1.0) - 2f64.sqrt() * s).abs() < 1e-15);
        assert!((qp_value(3.0, 1.0) + 2f64.sqrt() * s * t).abs() < 1e-15);
        assert!((lam_q_value(3.0, 1.0) - 0.218_496_4).abs() < 1e-6);
    }

    #[test]
    fn dd_ground_state_matches_f64() {
        for p in [2.0, 2.5, 3.0, 4.0] {
            for y in [-7.0, -0.3, 0.0, 2.0, 40.0] {
                let (q, qp) = q_dd(p, Dd::new(y));
                assert!((q.to_f64() - q_value(p, y)).abs() <= 1e-15 * q_value(p, y).max(1e-300) * 4.0);
                assert!((qp.to_f64() - qp_value(p, y)).abs() <= 1e-14 * q_value(p, y) + 1e-300);
            }
        }
    }

    #[test]
    fn identity_suite_p3() {
        let pp = make_params(3, 3.0, None).unwrap();
        let gs = eval_groundstate(&pp, Grid1D::profile_default());
        let r = check_identities(&gs);
        assert!((r.int_q2 - 4.0).abs() < 1e-9);
        assert!((r.int_qp2 - 4.0 / 3.0).abs() < 1e-9);
        assert!((r.q_lam_q - 2.0).abs() < 1e-8);
        assert!(r.pohozaev_defect <= 1e-8 && r.lam_q_defect <= 1e-8);
        let js = serde_json::to_value(r).unwrap();
        for key in ["intQ2", "intQp2", "QLamQ", "pohozaev_defect", "lamQ_defect"] {
            assert!(js.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn identity_suite_test_matrix() {
        for (n, p) in TEST_MATRIX {
            let pp = make_params(n, p, None).unwrap();
            let r = check_identities(&eval_groundstate(&pp, Grid1D::profile_default()));
            assert!(r.pohozaev_defect <= 1e-8 && r.lam_q_defect <= 1e-7, "({n},{p}) {r:?}");
        }
    }

    #[test]
    fn equation_residual_interior() {
        for (n, p) in TEST_MATRIX {
            let pp = make_params(n, p, None).unwrap();
            let gs = eval_groundstate(&pp, Grid1D::profile_default());
            let r = gs.equation_residual();
            let m = r.values[2..r.values.len() - 2].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(m <= 1e-8, "({n},{p}) residual {m:e}");
            let fd = gs.equation_residual_fd();
            let m = fd.values[2..fd.values.len() - 2].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(m <= 1e-6, "({n},{p}) fd residual {m:e}");
        }
    }

    #[test]
    fn tail_bound() {
        for p in [2.0, 2.5, 3.0, 4.0] {
            let q30 = q_value(p, 30.0);
            for i in 0..=300 {
                let y = 30.0 + i as f64 * 0.1;
                assert!(q_value(p, y) <= 2.0 * q30 * (-(y - 30.0)).exp());
                assert!(q_value(p, -y) <= 2.0 * q30 * (-(y - 30.0)).exp());
            }
        }
    }

    proptest! {
        #[test]
        fn ground_state_even_derivative_odd(p in 1.9f64..4.9, y in -50.0f64..50.0) {
            prop_assert_eq!(q_value(p, y), q_value(p, -y));
            prop_assert_eq!(qp_value(p, y), -qp_value(p, -y));
            prop_assert!(q_value(p, y) > 0.0);
        }

        #[test]
        fn admissible_params_invariants(n in 2usize..7, t in 0.01f64..0.99) {
            let nf = n as f64;
            let upper = if n == 2 { 5.0 } else { ((nf + 2.0) / (nf - 2.0)).min(5.0) };
            let lower = 1.0 + 4.0 / nf;
            prop_assume!(upper > lower);
            let p = lower + t * (upper - lower);
            let pp = make_params(n, p, None).unwrap();
            prop_assert!(pp.alpha > 0.0 && pp.alpha < 1.0);
            prop_assert!(pp.beta_inf > 0.0 && pp.beta_inf < 1.0);
            prop_assert!(pp.s_c > 0.0 && pp.s_c < 1.0);
            prop_assert!(pp.k >= 5 && pp.k as f64 > 2.0 / (1.0 - pp.alpha) + 1.0);
        }
    }
}
