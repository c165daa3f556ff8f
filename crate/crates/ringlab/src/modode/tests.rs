use std::sync::OnceLock;

use super::*;
use crate::dd::Dd;
use crate::groundstate::{eval_groundstate, make_params, TEST_MATRIX};
use crate::numerics::Grid1D;
use crate::profile::build_expansion;

fn params(n: usize, p: f64) -> ProblemParams {
    make_params(n, p, None).unwrap()
}

fn physical(pr: &ProblemParams, polys: &Polynomials, opts: &OdeOptions) -> ModTrajectory {
    to_physical_time(&integrate_exact(pr, polys, opts).unwrap()).unwrap()
}

fn polys_33() -> &'static Polynomials {
    static P: OnceLock<Polynomials> = OnceLock::new();
    P.get_or_init(|| {
        let pr = params(3, 3.0);
        let gs = eval_groundstate(&pr, Grid1D::profile_default());
        Polynomials::from_expansion(&build_expansion(&pr, &gs).unwrap())
    })
}

fn traj_33() -> &'static ModTrajectory {
    static T: OnceLock<ModTrajectory> = OnceLock::new();
    T.get_or_init(|| physical(&params(3, 3.0), polys_33(), &OdeOptions::default()))
}

#[test]
fn leading_rhs_identities() {
    let pr = params(3, 3.0);
    let polys = Polynomials::leading();
    let m = ModState::from_reduced(&pr, 100.0, 0.9, 0.02, 0.0, 0.0);
    let r = rhs_exact(&pr, &m, &polys).unwrap();
    assert!((r.b_s + (1.0 - pr.alpha) * 0.02 * 0.02).abs() < 1e-18);
    assert!((r.lambda_s / m.lambda + m.b).abs() < 1e-15);
    assert!((r.gamma_s - 4.0 / 3.0).abs() < 1e-15);
    assert!((r.r_s / m.lambda + 2.0 * pr.beta_inf).abs() < 1e-15);
    let bad = ModState { b: 0.0, ..m };
    assert!(rhs_exact(&pr, &bad, &polys).is_err());
}

#[test]
fn reduced_state_is_consistent_with_b() {
    let pr = params(3, 3.0);
    let m = ModState::from_reduced(&pr, 1.0, 0.8, 0.01, 1e-3, 0.0);
    assert!(m.frozen_b_defect(&pr) < 1e-14);
    assert!((m.g - m.r / m.lambda.powf(pr.alpha)).abs() < 1e-14);
    for m in &traj_33().states {
        assert!(m.frozen_b_defect(&pr) < 1e-12);
    }
}

#[test]
fn initialization_and_input_checks() {
    let pr = params(3, 3.0);
    let tr = traj_33();
    assert!((tr.states[0].b - 0.02).abs() < 1e-16);
    assert!((tr.states[0].btilde - 1e-4).abs() < 1e-18);
    let polys = Polynomials::leading();
    let base = OdeOptions::default();
    assert!(integrate_exact(&pr, &polys, &OdeOptions { s0: 50.0, ..base }).is_err());
    assert!(integrate_exact(&pr, &polys, &OdeOptions { g0: 0.4, ..base }).is_err());
    assert!(integrate_exact(&pr, &polys, &OdeOptions { g0: 1.0, ..base }).is_err());
}

#[test]
fn trajectory_is_ordered() {
    let tr = traj_33();
    for w in tr.states.windows(2) {
        assert!(w[1].s > w[0].s);
        assert!(w[1].t > w[0].t && w[1].t < 0.0);
    }
    assert!(tr.bootstrap_exit.is_none());
}

#[test]
fn b_follows_one_over_s() {
    let tr = traj_33();
    let a = 0.5;
    let mut worst = 0.0f64;
    for m in tr.states.iter().filter(|m| m.s >= 1e3 && m.s <= 1e6) {
        worst = worst.max((m.b * (1.0 - a) * m.s - 1.0).abs() * m.s / m.s.ln());
    }
    assert!(worst < 5.0, "C = {worst}");
}

#[test]
fn g_converges() {
    let tr = traj_33();
    assert!((tr.at_s(1e6).g - tr.at_s(1e5).g).abs() < 1e-8);
    assert!((tr.g_inf - tr.g_inf_alt).abs() < 1e-6);
    assert!(tr.states[0].g != tr.g_inf);
}

#[test]
fn g_inf_approaches_g0_as_s0_grows() {
    let pr = params(3, 3.0);
    let gap = |s0: f64| {
        let o = OdeOptions { s0, s_end: s0 * 1e4, ..OdeOptions::default() };
        (integrate_exact(&pr, polys_33(), &o).unwrap().g_inf - o.g0).abs()
    };
    let (a, b) = (gap(100.0), gap(1000.0));
    assert!(b < a / 10.0, "{a:e} {b:e}");
}

#[test]
fn physical_time_exponents_across_matrix() {
    for (n, p) in TEST_MATRIX {
        let pr = params(n, p);
        let tr = physical(&pr, &Polynomials::leading(), &OdeOptions::default());
        let ex = physical_exponents(&pr, &tr, 2.0).unwrap();
        for (fit, want) in [ex.lambda, ex.r, ex.gamma].iter().zip(ex.expected) {
            assert!((fit.exponent / want - 1.0).abs() < 0.02, "({n},{p}) {} vs {want}", fit.exponent);
        }
    }
}

#[test]
fn physical_time_with_full_polynomials() {
    let pr = params(3, 3.0);
    let ex = physical_exponents(&pr, traj_33(), 2.0).unwrap();
    assert!((ex.lambda.exponent - 2.0 / 3.0).abs() < 0.02 * 2.0 / 3.0);
    assert!((ex.r.exponent - 1.0 / 3.0).abs() < 0.02 / 3.0);
    assert!((ex.gamma.exponent + 1.0 / 3.0).abs() < 0.02 / 3.0);
}

#[test]
fn prefactors_of_b_and_lambda() {
    let pr = params(3, 3.0);
    let tr = traj_33();
    let a = pr.alpha;
    let c = 2.0 * (1.0 + a) * pr.beta_inf / (a * tr.g_inf);
    let m = tr.at_s(1e7);
    let t = m.t.abs();
    let b_law = c.powf(2.0 / (1.0 + a)) / (1.0 + a) * t.powf((1.0 - a) / (1.0 + a));
    let l_law = c.powf(1.0 / (1.0 + a)) * t.powf(1.0 / (1.0 + a));
    assert!((m.b / b_law - 1.0).abs() < 1e-4, "{}", m.b / b_law);
    assert!((m.lambda / l_law - 1.0).abs() < 1e-4, "{}", m.lambda / l_law);
}

#[test]
fn physical_time_matches_quadrature() {
    let tr = traj_33();
    let i = tr.states.iter().position(|m| m.s >= 1e4).unwrap();
    let j = i + 40;
    let u: Vec<f64> = tr.states[i..=j].iter().map(|m| m.s.ln()).collect();
    let f: Vec<f64> = tr.states[i..=j].iter().map(|m| m.s * m.lambda * m.lambda).collect();
    let h = (u[40] - u[0]) / 40.0;
    let simpson = |stride: usize| -> f64 {
        let hs = h * stride as f64;
        (0..40 / (2 * stride)).map(|q| hs / 3.0 * (f[2 * q * stride] + 4.0 * f[(2 * q + 1) * stride] + f[(2 * q + 2) * stride])).sum()
    };
    let integral = simpson(1) + (simpson(1) - simpson(2)) / 15.0;
    let dt = tr.states[j].t - tr.states[i].t;
    assert!((dt / integral - 1.0).abs() < 1e-6, "{}", dt / integral - 1.0);
}

#[test]
fn unforced_differences_vanish() {
    let pr = params(3, 3.0);
    let tr = traj_33();
    let run = integrate_perturbed(&pr, polys_33(), tr, 0.0, tr.at_s(1e6).t, tr.at_s(1e3).t, ForcingMode::Uniform).unwrap();
    for i in 0..run.abs_t.len() {
        assert_eq!(run.db[i], 0.0);
        assert_eq!(run.dg[i], 0.0);
        assert_eq!(run.dbtilde[i], 0.0);
        assert_eq!(run.dgamma[i], 0.0);
    }
    assert!(run.fit.is_none());
}

#[test]
fn forced_differences_decay_at_predicted_rate() {
    let pr = params(3, 3.0);
    let tr = traj_33();
    let (tb, tu) = (tr.at_s(1e6).t, tr.at_s(1e3).t);
    for mode in [ForcingMode::Uniform, ForcingMode::Random(7)] {
        let run = integrate_perturbed(&pr, polys_33(), tr, 1.0, tb, tu, mode).unwrap();
        assert!((run.predicted - 5.0 / 3.0).abs() < 1e-12);
        let e = run.fit.unwrap().exponent;
        assert!((e / run.predicted - 1.0).abs() < 0.1, "{mode:?}: {e}");
        let eg = run.gamma_fit.unwrap().exponent;
        assert!(eg > run.predicted_gamma - 0.1, "{mode:?}: {eg}");
    }
}

#[test]
fn random_forcing_is_reproducible() {
    let pr = params(3, 3.0);
    let tr = traj_33();
    let (tb, tu) = (tr.at_s(1e6).t, tr.at_s(1e4).t);
    let a = integrate_perturbed(&pr, polys_33(), tr, 1.0, tb, tu, ForcingMode::Random(3)).unwrap();
    let b = integrate_perturbed(&pr, polys_33(), tr, 1.0, tb, tu, ForcingMode::Random(3)).unwrap();
    let c = integrate_perturbed(&pr, polys_33(), tr, 1.0, tb, tu, ForcingMode::Random(4)).unwrap();
    assert_eq!(a.db, b.db);
    assert_ne!(a.db, c.db);
}

#[test]
fn perturbed_input_checks() {
    let pr = params(3, 3.0);
    let tr = traj_33();
    let (tb, tu) = (tr.at_s(1e6).t, tr.at_s(1e3).t);
    assert!(integrate_perturbed(&pr, polys_33(), tr, 1.0, tu, tb, ForcingMode::Uniform).is_err());
    let low = pr.with_expansion_order(5);
    assert!(integrate_perturbed(&low, polys_33(), tr, 1.0, tb, tu, ForcingMode::Uniform).is_err());
    let untimed = integrate_exact(&pr, polys_33(), &OdeOptions::default()).unwrap();
    assert!(integrate_perturbed(&pr, polys_33(), &untimed, 1.0, tb, tu, ForcingMode::Uniform).is_err());
}

#[test]
fn csv_layout() {
    let dir = std::env::temp_dir().join(format!("ringlab-modode-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("traj.csv");
    traj_33().write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "s,t,lambda,r,b,btilde,gamma,g");
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first.len(), 8);
    assert_eq!(first[0], 100.0);
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest::proptest! {
    #[test]
    fn difference_polynomial_is_exact(b in 1e-4f64..0.1, bt in -1e-3f64..1e-3, db in -1e-6f64..1e-6, dbt in -1e-6f64..1e-6) {
        let t = vec![(3usize, 0usize, -0.39), (1, 2, 1.7), (2, 1, 0.5), (0, 3, -2.0)];
        let eval = |x: Dd, y: Dd| t.iter().fold(Dd::ZERO, |acc, &(j, l, c)| acc + (x.powi(j as i32) * y.powi(l as i32)).mul_f64(c));
        let (b0, t0) = (Dd::new(b), Dd::new(bt));
        let direct = (eval(b0 + Dd::new(db), t0 + Dd::new(dbt)) - eval(b0, t0)).to_f64();
        let diff = poly_diff(&t, b, bt, db, dbt);
        let abs_t: Vec<_> = t.iter().map(|&(j, l, c)| (j, l, c.abs())).collect();
        let scale = poly_diff(&abs_t, b.abs(), bt.abs(), db.abs(), dbt.abs());
        proptest::prop_assert!((direct - diff).abs() <= 1e-13 * scale + 1e-30);
    }
}
