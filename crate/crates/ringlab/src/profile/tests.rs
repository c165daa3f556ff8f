use std::sync::OnceLock;

use num_complex::Complex;

use super::*;
use crate::dd::{cdd, cdd_to_c64, Cdd};
use crate::groundstate::{check_identities, eval_groundstate, make_params, q_value, TEST_MATRIX};
use crate::numerics::integrate;

fn default_33() -> &'static ProfileExpansion {
    static EXP: OnceLock<ProfileExpansion> = OnceLock::new();
    EXP.get_or_init(|| {
        let pr = make_params(3, 3.0, Some(6)).unwrap();
        let gs = eval_groundstate(&pr, Grid1D::profile_default());
        build_expansion(&pr, &gs).unwrap()
    })
}

fn field(gs: &GroundState, f: impl Fn(f64) -> (f64, f64)) -> Vec<Cdd> {
    gs.grid()
        .nodes()
        .into_iter()
        .map(|y| {
            let (a, b) = f(y);
            cdd(a, b)
        })
        .collect()
}

#[test]
fn nonlinearity_of_q_is_q_to_the_p() {
    for (n, p) in [(3, 3.0), (4, 2.5)] {
        let pr = make_params(n, p, None).unwrap();
        let gs = eval_groundstate(&pr, Grid1D::new(-20.0, 20.0, 801).unwrap());
        let nl = nonlinearity_series(&ground_series(&gs, 3), &gs).unwrap();
        let c0 = nl.coeff(gs.grid(), 0, 0);
        for (y, v) in gs.grid().nodes().into_iter().zip(&c0.values) {
            let q = q_value(p, y);
            assert!((v.re - q.powf(p)).abs() <= 1e-14 * q.powf(p).max(1e-300) + 1e-300);
            assert_eq!(v.im, 0.0);
        }
        for i in 1..nl.c.len() {
            assert!(nl.c[i].as_ref().map_or(true, |f| f.iter().all(|z| cdd_to_c64(*z).norm() == 0.0)));
        }
    }
}

#[test]
fn nonlinearity_first_order_is_the_frechet_derivative() {
    for (n, p) in [(3, 3.0), (4, 2.5), (5, 2.0)] {
        let pr = make_params(n, p, None).unwrap();
        let gs = eval_groundstate(&pr, Grid1D::new(-20.0, 20.0, 801).unwrap());
        let mut ser = ground_series(&gs, 2);
        let tf = |y: f64| y / y.cosh();
        let sf = |y: f64| 1.0 / (1.0 + y * y) / y.cosh();
        ser.set(1, 0, field(&gs, |y| (tf(y), sf(y))));
        let nl = nonlinearity_series(&ser, &gs).unwrap();
        let c = nl.coeff(gs.grid(), 1, 0);
        for (y, v) in gs.grid().nodes().into_iter().zip(&c.values) {
            let q = q_value(p, y);
            let re = p * q.powf(p - 1.0) * tf(y);
            let im = q.powf(p - 1.0) * sf(y);
            assert!((v.re - re).abs() <= 1e-12 * (1.0 + re.abs()), "{y} {} {re}", v.re);
            assert!((v.im - im).abs() <= 1e-12 * (1.0 + im.abs()));
        }
    }
}

#[test]
fn cubic_nonlinearity_matches_literal_product() {
    let pr = make_params(3, 3.0, None).unwrap();
    let gs = eval_groundstate(&pr, Grid1D::new(-15.0, 15.0, 301).unwrap());
    let deg = 4;
    let mut ser = ground_series(&gs, deg);
    for m in 1..=deg {
        for (j, l) in series::monomials_of_degree(m) {
            let (a, b) = (j as f64 + 0.5, l as f64 - 0.3);
            ser.set(j, l, field(&gs, |y| (a * (-(y * y) / (4.0 + m as f64)).exp(), b * y * (-y.abs()).exp())));
        }
    }
    let nl = nonlinearity_series(&ser, &gs).unwrap();
    let lit = ser.mul(&ser).unwrap().mul(&ser.conj()).unwrap();
    for m in 0..=deg {
        for (j, l) in series::monomials_of_degree(m) {
            let x = nl.coeff(gs.grid(), j, l);
            let y = lit.coeff(gs.grid(), j, l);
            let scale = 1.0 + y.max_abs();
            for (a, b) in x.values.iter().zip(&y.values) {
                assert!((a - b).norm() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn nonlinearity_rejects_wrong_constant_term() {
    let pr = make_params(3, 3.0, None).unwrap();
    let gs = eval_groundstate(&pr, Grid1D::new(-10.0, 10.0, 101).unwrap());
    let ser = FieldSeries::constant(2, vec![cdd(1.0, 0.0); 101]);
    assert!(nonlinearity_series(&ser, &gs).is_err());
}

#[test]
fn step_two_cancellation_identity() {
    for (n, p) in TEST_MATRIX {
        let pr = make_params(n, p, None).unwrap();
        let gs = eval_groundstate(&pr, Grid1D::profile_default());
        let id = check_identities(&gs);
        let lhs = (n as f64 - 1.0) * pr.alpha / (2.0 * pr.beta_inf) * id.int_qp2;
        let rhs = pr.beta_inf / 2.0 * id.int_q2;
        assert!((lhs - rhs).abs() <= 1e-9 * rhs, "{n} {p}: {lhs} {rhs}");
    }
}

#[test]
fn low_order_constants_across_test_matrix() {
    for (n, p) in TEST_MATRIX {
        let pr = make_params(n, p, None).unwrap();
        let gs = eval_groundstate(&pr, Grid1D::profile_default());
        let exp = build_expansion_with(&pr, &gs, BuildOptions { max_degree: Some(2) }).unwrap();
        assert_eq!(exp.degree, 2);
        for jl in [(1, 0), (0, 1), (2, 0), (0, 2)] {
            assert!(exp.c1(jl.0, jl.1).abs() <= 1e-6, "{n} {p} c1{jl:?}");
            assert!(exp.c2(jl.0, jl.1).abs() <= 1e-6, "{n} {p} c2{jl:?}");
        }
        assert!(exp.c1(1, 1).abs() <= 1e-6);
        assert!((exp.c2(1, 1) + 2.0).abs() <= 1e-6, "{n} {p}: {}", exp.c2(1, 1));
    }
}

#[test]
fn c211_from_its_scalar_product() {
    // (h₁, Q') = −∫Q² = −4 and (yQ, Q') = −½∫Q² = −2 give c₂(1,1) = −2 at p = 3.
    let exp = default_33();
    let int_q2 = integrate(&exp.gs.q.zip_with(&exp.gs.q, |a, b| a * b)).unwrap();
    let yq_qp = exp.gs.y_q.dot(&exp.gs.qp);
    assert!((int_q2 - 4.0).abs() < 1e-9);
    assert!((yq_qp + 2.0).abs() < 1e-9);
    let h1_qp = -int_q2;
    assert!((exp.c2(1, 1) - (-h1_qp / yq_qp)).abs() < 1e-6);
}

#[test]
fn parity_ladder_at_low_orders() {
    let exp = default_33();
    let t = |j, l| &exp.t[&(j, l)];
    let s = |j, l| &exp.s[&(j, l)];
    assert!(parity_defect(t(1, 0), -1.0) < 1e-12);
    assert!(parity_defect(s(1, 0), 1.0) < 1e-12);
    assert!(parity_defect(t(2, 0), 1.0) < 1e-12);
    assert!(parity_defect(s(2, 0), -1.0) < 1e-12);
    assert!(parity_defect(t(1, 1), -1.0) < 1e-12);
    assert!(parity_defect(s(1, 1), 1.0) < 1e-12);
    assert!(t(2, 0).max_abs() > 0.1 && s(2, 0).max_abs() > 0.1);
}

#[test]
fn pure_drift_orders_vanish() {
    let exp = default_33();
    for l in 1..=exp.degree {
        assert_eq!(exp.t[&(0, l)].max_abs(), 0.0);
        assert_eq!(exp.s[&(0, l)].max_abs(), 0.0);
    }
}

#[test]
fn recursion_is_self_consistent() {
    let exp = default_33();
    assert!(exp.reconstruction_defect().unwrap() <= 1e-8);
    for r in &exp.reports {
        assert!(r.solvability_plus.abs() <= 1e-6 * (1.0 + r.rhs_norm));
        assert!(r.solvability_minus.abs() <= 1e-6 * (1.0 + r.rhs_norm));
        assert!(r.gauge_plus <= 1e-10 && r.gauge_minus <= 1e-10);
    }
}

#[test]
fn residual_order_matches_k() {
    let exp = default_33();
    let uncut = ResidualOptions { cutoff: false };
    let (_, n2) = residual_psi_with(exp, 1e-2, 0.0, uncut).unwrap();
    let (_, n3) = residual_psi_with(exp, 1e-3, 0.0, uncut).unwrap();
    let slope = (n2 / n3).log10();
    assert!((slope - 6.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn residual_vanishes_as_b_shrinks() {
    let exp = default_33();
    let mut last = f64::INFINITY;
    for b in [1e-1, 1e-2, 1e-3, 1e-4] {
        let (_, nrm) = residual_psi(exp, b, 0.0).unwrap();
        assert!(nrm < last);
        last = nrm;
    }
    assert!(last < 1e-15);
}

#[test]
fn cutoff_only_changes_the_left_tail() {
    let exp = default_33();
    let b = 0.01;
    let (cut, _) = residual_psi(exp, b, 0.0).unwrap();
    let (uncut, _) = residual_psi_with(exp, b, 0.0, ResidualOptions { cutoff: false }).unwrap();
    let edge = -1.0 / b.sqrt();
    let mut inside = 0.0f64;
    for (i, y) in exp.grid().nodes().into_iter().enumerate() {
        let d = (cut.values[i] - uncut.values[i]).norm();
        if y > edge {
            assert_eq!(d, 0.0);
        } else {
            inside = inside.max(d);
        }
    }
    assert!(inside > 0.0);
}

#[test]
fn cutoff_shape() {
    let grid = Grid1D::profile_default();
    for b in [1e-3, 1e-2, 0.3] {
        let z = cutoff_zeta(b, grid).unwrap();
        assert_eq!(z.values[grid.nearest(0.0)], 1.0);
        assert_eq!(zeta(b.sqrt() * (-2.5 / b.sqrt())).0, 0.0);
        assert!(z.values.windows(2).all(|w| w[1] >= w[0]));
    }
    assert!(cutoff_zeta(0.0, grid).is_err());
}

#[test]
fn cutoff_derivatives_match_differences() {
    for &y in &[-1.9, -1.7, -1.5, -1.3, -1.1] {
        let h = 1e-5;
        let (_, d1, d2) = zeta(y);
        let fd1 = (zeta(y + h).0 - zeta(y - h).0) / (2.0 * h);
        let fd2 = (zeta(y + h).1 - zeta(y - h).1) / (2.0 * h);
        assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()));
        assert!((d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()));
    }
}

#[test]
fn assembled_profile_reduces_to_modulated_ground_state() {
    let exp = default_33();
    let grid = exp.grid();
    let qb = assemble_qb(exp, 1e-10, 0.0, grid).unwrap();
    let beta = exp.params.beta_inf;
    for (i, y) in grid.nodes().into_iter().enumerate() {
        let want = Complex::from_polar(q_value(3.0, y), -beta * y);
        assert!((qb.values[i] - want).norm() < 1e-8);
    }
    assert!(assemble_qb(exp, 0.6, 0.0, grid).is_err());
    assert!(assemble_qb(exp, 0.0, 0.0, grid).is_err());
}

#[test]
fn assembled_profile_decay_and_phase_invariance() {
    let exp = default_33();
    let grid = exp.grid();
    let b = 0.01;
    let qb = assemble_qb(exp, b, b.powf(1.5), grid).unwrap();
    let k = exp.params.k as i32;
    let c = grid
        .nodes()
        .into_iter()
        .zip(&qb.values)
        .map(|(y, v)| v.norm() / ((1.0 + y.abs().powi(2 * k)) * (-y.abs()).exp()))
        .fold(0.0f64, f64::max);
    assert!(c.is_finite() && c < 10.0, "{c}");
    let g = Complex::from_polar(1.0, 0.7);
    for v in &qb.values {
        assert!(((v * g).norm() - v.norm()).abs() <= 1e-15 * (1.0 + v.norm()));
    }
}

#[test]
fn off_grid_assembly_agrees_with_on_grid() {
    let exp = default_33();
    let b = 0.02;
    let on = assemble_qb(exp, b, 0.0, exp.grid()).unwrap();
    let fine = Grid1D::new(-60.0, 60.0, 12001).unwrap();
    let off = assemble_qb(exp, b, 0.0, fine).unwrap();
    for i in 0..exp.grid().n {
        assert!((off.values[2 * i] - on.values[i]).norm() < 1e-12);
    }
}

#[test]
fn save_and_load_round_trip() {
    let exp = default_33();
    let dir = std::env::temp_dir().join(format!("ringlab-profile-{}", std::process::id()));
    save_expansion(exp, &dir).unwrap();
    let back = load_expansion(&dir).unwrap();
    assert_eq!(back.degree, exp.degree);
    assert_eq!(back.c1, exp.c1);
    assert_eq!(back.c2, exp.c2);
    for (jl, t) in &exp.t {
        assert_eq!(back.t[jl].values, t.values);
        assert_eq!(back.s[jl].values, exp.s[jl].values);
    }
    for b in [1e-2, 1e-3] {
        let (_, x) = residual_psi(exp, b, 0.0).unwrap();
        let (_, y) = residual_psi(&back, b, 0.0).unwrap();
        assert!((x - y).abs() <= 1e-12 * x, "b = {b}: {x:e} vs {y:e}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn build_rejects_one_sided_grid() {
    let pr = make_params(3, 3.0, None).unwrap();
    let gs = eval_groundstate(&pr, Grid1D::new(0.0, 30.0, 301).unwrap());
    assert!(build_expansion(&pr, &gs).is_err());
}
