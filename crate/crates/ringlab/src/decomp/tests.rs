use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::groundstate::{eval_groundstate, make_params};
use crate::modode::{integrate_exact, to_physical_time, ModTrajectory, OdeOptions};
use crate::numerics::Grid1D;
use crate::profile::build_expansion;

struct Setup {
    exp: ProfileExpansion,
    traj: ModTrajectory,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let pr = make_params(3, 3.0, None).unwrap();
        let gs = eval_groundstate(&pr, Grid1D::profile_default());
        let exp = build_expansion(&pr, &gs).unwrap();
        let polys = Polynomials::from_expansion(&exp);
        let traj = to_physical_time(&integrate_exact(&pr, &polys, &OdeOptions::default()).unwrap()).unwrap();
        Setup { exp, traj }
    })
}

fn ring_state(s: f64) -> ModState {
    let st = setup();
    let m = st.traj.at_s(s);
    m.rescaled(&st.exp.params, m.r)
}

fn exact_case() -> (ModState, WaveField) {
    let st = setup();
    let m = modulated_state(&st.exp.params, 0.1, 1.0, 0.3, 0.0, 0.0, 0.0);
    let grid = RadialGrid::new(4.0, (1 << 14) + 1).unwrap();
    (m, ansatz_field(&st.exp, &m, grid))
}

fn scaled_shift(a: &ModState, b: &ModState) -> [f64; 4] {
    [(a.lambda - b.lambda) / b.lambda, (a.r - b.r) / b.lambda, a.gamma - b.gamma, a.btilde - b.btilde]
}

fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn zero_error_has_zero_residuals() {
    let g = Grid1D::new(-40.0, 40.0, 801).unwrap();
    assert_eq!(orthogonality_residuals(&ComplexField::zeros(g), 0.01, 3.0), [0.0; 4]);
}

#[test]
fn residuals_of_kernel_directions() {
    let g = Grid1D::new(-40.0, 40.0, 8001).unwrap();
    for (b, tol) in [(1e-4f64, 1e-9), (0.02, 1e-4)] {
        let sb = b.sqrt();
        let iq = ComplexField::from_fn(g, |y| Complex64::new(0.0, zeta(sb * y).0 * q_value(3.0, y)));
        let r = orthogonality_residuals(&iq, b, 3.0);
        assert!((r[2] - 2.0).abs() < tol, "b = {b}: {}", r[2]);
        assert_eq!((r[0], r[1]), (0.0, 0.0));
        let dq = ComplexField::from_fn(g, |y| Complex64::new(zeta(sb * y).0 * qp_value(3.0, y), 0.0));
        let r = orthogonality_residuals(&dq, b, 3.0);
        assert!((r[0] + 2.0).abs() < tol, "b = {b}: {}", r[0]);
        assert!(r[1].abs() < tol && r[2] == 0.0 && r[3] == 0.0);
    }
}

#[test]
fn determinant_limit_at_cubic_power() {
    assert!((determinant_limit(3.0) + 16.0).abs() < 1e-9);
    let d = jacobian_determinant(&setup().exp, 1e-4, 0.0).unwrap();
    assert!((d / -16.0 - 1.0).abs() < 1e-3, "{d}");
}

#[test]
fn determinant_correction_is_linear_in_b() {
    let exp = &setup().exp;
    let d0 = jacobian_determinant(exp, 0.0, 0.0).unwrap();
    assert!((d0 / -16.0 - 1.0).abs() < 1e-6, "{d0}");
    let bs = [1e-3, 2e-3, 4e-3, 8e-3];
    let dev: Vec<f64> = bs.iter().map(|&b| jacobian_determinant(exp, b, 0.0).unwrap() - d0).collect();
    let fit = crate::fit::power_law_fit(&bs, &dev, (0.0, 1.0)).unwrap();
    assert!(fit.exponent > 0.9, "exponent {}", fit.exponent);
    assert!(fit.prefactor.is_finite() && dev.iter().zip(bs).all(|(d, b)| (d / b).abs() < 1e3));
}

#[test]
fn jacobian_matches_block_structure() {
    let j = jacobian_matrix(&setup().exp, 0.0, 0.0).unwrap();
    assert!((j[(0, 0)] + 2.0).abs() < 1e-6);
    assert!((j[(1, 1)] - 2.0).abs() < 1e-6);
    assert!(j[(1, 0)].abs() < 1e-6 && j[(0, 2)].abs() < 1e-6 && j[(1, 3)].abs() < 1e-6);
    assert!((j[(2, 2)] + 2.0).abs() < 1e-6);
    assert!((j[(3, 3)] + 2.0).abs() < 1e-6);
}

#[test]
fn exact_ansatz_round_trip() {
    let (m, f) = exact_case();
    let exp = &setup().exp;
    let guess = ModState { lambda: 0.101, r: 1.002, gamma: 0.31, btilde: 1e-3, ..m };
    let d = decompose(&f, &guess, exp).unwrap();
    let shift = scaled_shift(&d.modulation, &m);
    assert!(shift.iter().all(|x| x.abs() < 1e-8), "{shift:?}");
    assert!(d.eps_h1mu < 1e-8, "{}", d.eps_h1mu);
    assert!((d.modulation.b - m.b).abs() < 1e-8);
    assert!(d.newton_iters > 0);
    let from_peak = decompose(&f, &initial_guess(&f, &exp.params), exp).unwrap();
    assert!(norm4(&scaled_shift(&from_peak.modulation, &m)) < 1e-8);
}

#[test]
fn generic_perturbation_response_is_linear() {
    let (m, f) = exact_case();
    let exp = &setup().exp;
    let amp = m.lambda.powf(-exp.params.amp_exp());
    let bump = |r: f64| Complex64::new(1.0, 0.5) * amp * (-(r - 1.03f64).powi(2) / (2.0 * 0.04 * 0.04)).exp();
    let shifted = |a: f64| {
        let mut g = f.clone();
        for (i, z) in g.u.iter_mut().enumerate() {
            *z += a * bump(f.grid.node(i));
        }
        let d = decompose(&g, &m, exp).unwrap();
        assert!(d.ortho_residuals.iter().all(|r| r.abs() < 1e-10), "{:?}", d.ortho_residuals);
        scaled_shift(&d.modulation, &m)
    };
    let a0 = 1e-6;
    let (p, q) = (shifted(a0), shifted(-a0));
    let slope: [f64; 4] = std::array::from_fn(|k| (p[k] - q[k]) / (2.0 * a0));
    for a in [1e-4, 1e-3, 1e-2] {
        let s = shifted(a);
        let diff: [f64; 4] = std::array::from_fn(|k| s[k] / a - slope[k]);
        assert!(norm4(&diff) <= 0.05 * norm4(&slope), "a = {a}: {diff:?} vs {slope:?}");
    }
}

#[test]
fn orthogonal_perturbation_leaves_parameters() {
    let (m, f) = exact_case();
    let exp = &setup().exp;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let e = random_orthogonal_error(exp, &m, f.grid, 1e-3, &mut rng).unwrap();
    let g = WaveField { u: f.u.iter().zip(&e.u).map(|(a, b)| a + b).collect(), ..f.clone() };
    let d = decompose(&g, &m, exp).unwrap();
    assert!(norm4(&scaled_shift(&d.modulation, &m)) < 1e-9);
    assert!(d.ortho_residuals.iter().all(|r| r.abs() < 1e-12));
    assert!((d.local_size - 1e-3 / 2.0).abs() < 1e-4, "{}", d.local_size);
}

#[test]
fn basin_probe_is_never_silently_wrong() {
    let (m, f) = exact_case();
    let exp = &setup().exp;
    for factor in [0.7, 1.3] {
        let guess = modulated_state(&exp.params, factor * m.lambda, m.r, m.gamma, 0.0, 0.0, 0.0);
        if let Ok(d) = decompose(&f, &guess, exp) {
            assert!(norm4(&scaled_shift(&d.modulation, &m)) < 1e-8, "factor {factor}");
        }
    }
    let far = modulated_state(&exp.params, 0.5 * m.lambda, m.r + 0.3, m.gamma + 2.0, 0.0, 0.0, 0.0);
    let capped = DecompOptions { max_iter: 1, ..DecompOptions::default() };
    assert!(decompose_with(&f, &far, exp, &capped).is_err());
}

#[test]
fn mod_defects_of_an_exact_trajectory() {
    let st = setup();
    let pr = st.exp.params;
    let polys = Polynomials::from_expansion(&st.exp);
    let opts = OdeOptions { s_end: 200.0, nodes_per_decade: 4000, rtol: 1e-12, ..OdeOptions::default() };
    let tr = to_physical_time(&integrate_exact(&pr, &polys, &opts).unwrap()).unwrap();
    let defects = mod_residuals(&tr.states, &st.exp).unwrap();
    assert_eq!(defects.len(), tr.states.len() - 2);
    let worst = defects.iter().map(|d| d.total).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    let fine = OdeOptions { nodes_per_decade: 8000, ..opts };
    let tr2 = to_physical_time(&integrate_exact(&pr, &polys, &fine).unwrap()).unwrap();
    let worst2 = mod_residuals(&tr2.states, &st.exp).unwrap().iter().map(|d| d.total).fold(0.0, f64::max);
    assert!((worst / worst2 - 4.0).abs() < 0.4, "{worst} {worst2}");
    assert!(mod_residuals(&tr.states[..2], &st.exp).is_err());
    let mut gappy = tr.states[..20].to_vec();
    gappy.remove(10);
    assert!(mod_residuals(&gappy, &st.exp).is_err());
}

#[test]
fn phase_injection_shows_in_the_phase_defect() {
    let st = setup();
    let pr = st.exp.params;
    let polys = Polynomials::from_expansion(&st.exp);
    let opts = OdeOptions { s_end: 120.0, nodes_per_decade: 4000, rtol: 1e-12, ..OdeOptions::default() };
    let tr = to_physical_time(&integrate_exact(&pr, &polys, &opts).unwrap()).unwrap();
    let clean = mod_residuals(&tr.states, &st.exp).unwrap();
    let mut states = tr.states.clone();
    let j = 50;
    states[j].gamma += 0.01;
    let hit = mod_residuals(&states, &st.exp).unwrap();
    let s = |k: usize| clean[k - 1].s;
    let (hm, hp) = (s(j + 1) - s(j), s(j + 2) - s(j + 1));
    let want = 0.01 * hp / (hm * (hm + hp));
    let jump = hit[j].phase - clean[j].phase;
    assert!((jump / want - 1.0).abs() < 1e-3, "{jump} vs {want}");
    assert!((want * (s(j + 2) - s(j)) / 0.01 - 1.0).abs() < 0.01);
}

#[test]
fn functional_of_zero_and_cutoff_shape() {
    let st = setup();
    let m = ring_state(100.0);
    let grid = RadialGrid::new(4.0, 1 << 14).unwrap();
    let solver = RadialSolver::for_params(grid, &st.exp.params).unwrap();
    let rep = energy_morawetz_i(&solver, &WaveField::zeros(grid, m.t), &m, &st.exp).unwrap();
    assert_eq!((rep.total, rep.ratio), (0.0, 0.0));
    assert_eq!(cutoff_phi(0.0), 1.0);
    assert_eq!(cutoff_phi(0.5), 0.0);
    assert!((-100..100).all(|i| cutoff_phi(i as f64 * 0.01) <= 1.0));
}

#[test]
fn morawetz_term_of_a_plane_wave_packet() {
    let st = setup();
    let m = ring_state(100.0);
    let grid = RadialGrid::new(4.0, 1 << 15).unwrap();
    let solver = RadialSolver::for_params(grid, &st.exp.params).unwrap();
    let env = |r: f64| (-(r - 1.0f64).powi(2) / (2.0 * 0.02 * 0.02)).exp();
    let real = WaveField::from_fn(grid, m.t, |r| Complex64::new(1e-3 * env(r), 0.0));
    assert_eq!(energy_morawetz_i(&solver, &real, &m, &st.exp).unwrap().morawetz, 0.0);
    let kappa = 30.0;
    let wave = WaveField::from_fn(grid, m.t, |r| Complex64::from_polar(1e-3 * env(r), kappa * r));
    let rep = energy_morawetz_i(&solver, &wave, &m, &st.exp).unwrap();
    let direct: f64 = (0..grid.n_r)
        .map(|i| {
            let r = grid.node(i);
            cutoff_phi(r / m.r - 1.0) * r * r * (1e-3 * env(r)).powi(2)
        })
        .sum::<f64>()
        * grid.h
        * solver.area
        * kappa
        * (st.exp.params.beta_inf + m.btilde)
        / m.lambda;
    assert!((rep.morawetz / direct - 1.0).abs() < 1e-3, "{} vs {direct}", rep.morawetz);
}

#[test]
fn random_orthogonal_fields_are_coercive() {
    let st = setup();
    let m = ring_state(100.0);
    let grid = RadialGrid::new(4.0, 1 << 15).unwrap();
    let solver = RadialSolver::for_params(grid, &st.exp.params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let u = random_orthogonal_error(&st.exp, &m, grid, 1e-3, &mut rng).unwrap();
        let eps = error_profile(&u, &m, &st.exp.params).unwrap();
        let et = tilde(&eps, st.exp.params.beta_inf + m.btilde);
        assert!(orthogonality_residuals(&et, m.b, 3.0).iter().all(|r| r.abs() < 1e-15));
        let rep = energy_morawetz_i(&solver, &u, &m, &st.exp).unwrap();
        assert!(rep.ratio < 1.0);
        worst = worst.min(rep.ratio);
        let w = WeightSpec::new(m.b, st.exp.params.beta_inf + m.btilde, 3, st.exp.params.alpha).unwrap();
        let h1 = h1mu_norm(&eps, &w).unwrap();
        let cut = -0.1 / m.b;
        let sup = (0..eps.grid.n).filter(|&i| eps.grid.node(i) >= cut).map(|i| eps.values[i].norm()).fold(0.0, f64::max);
        assert!(sup <= h1, "{sup} > {h1}");
    }
    assert!(worst > 0.05, "{worst}");
}

#[test]
fn kernel_direction_loses_coercivity_as_b_vanishes() {
    let st = setup();
    let ratio = |s: f64| {
        let m = ring_state(s);
        let n_r = (4.0 * 40.0 / m.lambda).ceil() as usize;
        let grid = RadialGrid::new(4.0, n_r).unwrap();
        let solver = RadialSolver::for_params(grid, &st.exp.params).unwrap();
        let beta = st.exp.params.beta_inf + m.btilde;
        let sb = m.b.sqrt();
        let amp = Complex64::from_polar(1e-3 * m.lambda.powf(-st.exp.params.amp_exp()), m.gamma);
        let u = WaveField::from_fn(grid, m.t, |r| {
            let y = (r - m.r) / m.lambda;
            amp * Complex64::new(0.0, zeta(sb * y).0 * q_value(3.0, y)) * Complex64::from_polar(1.0, -beta * y)
        });
        energy_morawetz_i(&solver, &u, &m, &st.exp).unwrap().ratio
    };
    let (a, b) = (ratio(100.0), ratio(1000.0));
    assert!(a.abs() < 0.05 && b.abs() < a.abs() / 3.0, "{a:e} {b:e}");
}

#[test]
fn series_csv_round_trip() {
    let (m, f) = exact_case();
    let d = decompose(&f, &m, &setup().exp).unwrap();
    let rows = vec![DecompRow::new(&d, f64::NAN), DecompRow::new(&d, 1.5e-7)];
    let dir = std::env::temp_dir().join(format!("ringlab-decomp-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("series.csv");
    write_decomp_series(&rows, &path).unwrap();
    let back = read_decomp_series(&path).unwrap();
    assert!(back[0].mod_total.is_nan());
    assert_eq!(back[1], rows[1]);
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .starts_with("t,lambda,r,gamma,btilde,b,eps_h1mu,ortho1,ortho2,ortho3,ortho4,mod_total\n"));
    std::fs::remove_dir_all(&dir).unwrap();
}
