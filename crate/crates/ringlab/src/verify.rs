//! The twelve acceptance checks, each returning a pass/fail outcome with its
//! measured values. Expansions, trajectories and the simulation are built once
//! per `Verifier` and shared between checks.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::decomp::{
    ansatz_field, decompose, decompose_with, determinant_limit, energy_morawetz_i, initial_guess, jacobian_determinant, mod_residuals,
    modulated_state, random_orthogonal_error, DecompResult, ModDefects,
};
use crate::error::{Error, Result};
use crate::fit::power_law_fit;
use crate::groundstate::{check_identities, eval_groundstate, make_params, GroundState, ProblemParams, TEST_MATRIX};
use crate::linops::{coercivity_min_eig, LinearizedPair};
use crate::modode::{integrate_exact, integrate_perturbed, physical_exponents, to_physical_time, ModState, ModTrajectory, Polynomials};
use crate::nlsim::{check_virial_bound, run_to_blowup, RadialGrid, RadialSolver, SimRun, WaveField};
use crate::numerics::{Grid1D, RealField};
use crate::profile::{build_expansion, residual_psi_with, ProfileExpansion, ResidualOptions};

/// Lower bound asserted for the worst coercivity ratio over random orthogonal fields.
pub const COERCIVITY_BASELINE: f64 = 0.2;

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "ground-state identities"),
    (2, "kernel identities"),
    (3, "solvability constants"),
    (4, "residual order"),
    (5, "profile decay"),
    (6, "modulation ODE exponents"),
    (7, "perturbed-system stability"),
    (8, "Jacobian determinant"),
    (9, "decomposition round trip"),
    (10, "coercivity"),
    (11, "ring blow-up simulation"),
    (12, "modulation defects"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip)]
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

struct Check {
    passed: bool,
    detail: Vec<String>,
    metrics: BTreeMap<String, f64>,
}

impl Check {
    fn new() -> Check {
        Check { passed: true, detail: Vec::new(), metrics: BTreeMap::new() }
    }

    fn require(&mut self, ok: bool, what: String) {
        if !ok {
            self.passed = false;
            self.detail.push(format!("{what} ✗"));
        } else {
            self.detail.push(what);
        }
    }

    fn metric(&mut self, key: impl Into<String>, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    fn budget(&mut self, start: Instant, seconds: f64) {
        let used = start.elapsed().as_secs_f64();
        self.require(used < seconds, format!("runtime {used:.1} s < {seconds} s"));
    }
}

/// Artifacts of the ring simulation and of its snapshot decompositions.
pub struct SimArtifacts {
    pub run: SimRun,
    pub launch: ModState,
    pub virial: Vec<(f64, f64)>,
    pub groups: Vec<ModGroup>,
}

/// One snapshot group: its decompositions and the defects at the interior nodes.
pub struct ModGroup {
    pub states: Vec<ModState>,
    pub eps_h1mu: Vec<f64>,
    /// Defects at the interior nodes `1..len−1`.
    pub defects: Vec<ModDefects>,
}

pub struct Verifier {
    pub cfg: RunConfig,
    expansions: BTreeMap<(usize, u64, usize, u64), ProfileExpansion>,
    trajectory: Option<ModTrajectory>,
    sim: Option<std::result::Result<SimArtifacts, String>>,
}

fn key(params: &ProblemParams, h: f64) -> (usize, u64, usize, u64) {
    (params.n_dim, params.p.to_bits(), params.k, h.to_bits())
}

fn interior_sup(f: &RealField) -> f64 {
    f.values[2..f.values.len() - 2].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

impl Verifier {
    pub fn new(cfg: RunConfig) -> Verifier {
        Verifier { cfg, expansions: BTreeMap::new(), trajectory: None, sim: None }
    }

    fn grid(&self, h: f64) -> Result<Grid1D> {
        Grid1D::with_spacing(-self.cfg.grid.y_max, self.cfg.grid.y_max, h)
    }

    fn ground_state(&self, params: &ProblemParams) -> Result<GroundState> {
        Ok(eval_groundstate(params, self.grid(self.cfg.grid.h)?))
    }

    /// The expansion of `params` on the profile grid with spacing `h`, built on first use.
    pub fn expansion_at(&mut self, params: &ProblemParams, h: f64) -> Result<&ProfileExpansion> {
        let k = key(params, h);
        if !self.expansions.contains_key(&k) {
            let gs = eval_groundstate(params, self.grid(h)?);
            self.expansions.insert(k, build_expansion(params, &gs)?);
        }
        Ok(&self.expansions[&k])
    }

    pub fn expansion(&mut self, params: &ProblemParams) -> Result<&ProfileExpansion> {
        let h = self.cfg.grid.h;
        self.expansion_at(params, h)
    }

    fn params_33(&self) -> Result<ProblemParams> {
        make_params(3, 3.0, None)
    }

    /// The exact (3,3) trajectory in physical time.
    pub fn trajectory(&mut self) -> Result<&ModTrajectory> {
        if self.trajectory.is_none() {
            let params = self.params_33()?;
            let polys = Polynomials::from_expansion(self.expansion(&params)?);
            let opts = self.cfg.ode_options();
            self.trajectory = Some(to_physical_time(&integrate_exact(&params, &polys, &opts)?)?);
        }
        Ok(self.trajectory.as_ref().expect("just built"))
    }

    pub fn run(&mut self, id: u8) -> Outcome {
        let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1).to_string();
        let start = Instant::now();
        let res = match id {
            1 => self.identities(start),
            2 => self.kernel(start),
            3 => self.constants(start),
            4 => self.residual_order(start),
            5 => self.decay(start),
            6 => self.ode_exponents(start),
            7 => self.perturbed(start),
            8 => self.determinant(start),
            9 => self.round_trip(start),
            10 => self.coercivity(start),
            11 => self.simulation(start),
            12 => self.mod_bound(start),
            _ => Err(Error::Input(format!("no criterion {id}"))),
        };
        let seconds = start.elapsed().as_secs_f64();
        match res {
            Ok(c) => Outcome { id, name, passed: c.passed, detail: c.detail.join("; "), metrics: c.metrics, seconds },
            Err(e) => Outcome { id, name, passed: false, detail: format!("error: {e}"), metrics: BTreeMap::new(), seconds },
        }
    }

    pub fn run_all(&mut self, ids: &[u8], mut each: impl FnMut(&Outcome)) -> Vec<Outcome> {
        ids.iter()
            .map(|&id| {
                let o = self.run(id);
                each(&o);
                o
            })
            .collect()
    }

    fn identities(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        for (n, p) in TEST_MATRIX {
            let rep = check_identities(&self.ground_state(&make_params(n, p, None)?)?);
            c.metric(format!("pohozaev_defect({n},{p})"), rep.pohozaev_defect);
            c.metric(format!("lamq_defect({n},{p})"), rep.lam_q_defect);
            c.require(
                rep.pohozaev_defect <= 1e-7 && rep.lam_q_defect <= 1e-7,
                format!("({n},{p}) defects {:.1e}, {:.1e}", rep.pohozaev_defect, rep.lam_q_defect),
            );
            if p == 3.0 {
                let ok = rel(rep.int_q2, 4.0) <= 1e-7 && rel(rep.int_qp2, 4.0 / 3.0) <= 1e-7 && rel(rep.q_lam_q, 2.0) <= 1e-7;
                c.require(ok, format!("∫Q² = {:.9}, ∫Q'² = {:.9}, (Q,ΛQ) = {:.9}", rep.int_q2, rep.int_qp2, rep.q_lam_q));
            }
        }
        c.budget(start, 1.0);
        Ok(c)
    }

    fn kernel(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        for (n, p) in TEST_MATRIX {
            let lp = LinearizedPair::new(&self.ground_state(&make_params(n, p, None)?)?);
            let gs = &lp.gs;
            let defects = [
                interior_sup(&lp.apply_lminus(&gs.q)?),
                interior_sup(&lp.apply_lplus(&gs.qp)?),
                interior_sup(&lp.apply_lplus(&gs.lam_q)?.zip_with(&gs.q, |a, q| a + 2.0 * q)),
                interior_sup(&lp.apply_lminus(&gs.y_q)?.zip_with(&gs.qp, |a, qp| a + 2.0 * qp)),
            ];
            let worst = defects.iter().cloned().fold(0.0, f64::max);
            c.metric(format!("sup_defect({n},{p})"), worst);
            c.require(worst <= 1e-6, format!("({n},{p}) sup {worst:.1e}"));
        }
        c.budget(start, 1.0);
        Ok(c)
    }

    fn constants(&mut self, _start: Instant) -> Result<Check> {
        let mut c = Check::new();
        for (n, p) in TEST_MATRIX {
            let t0 = Instant::now();
            let params = make_params(n, p, None)?;
            let exp = self.expansion(&params)?;
            let low = [(1, 0), (0, 1), (2, 0), (0, 2)];
            let mut worst = exp.c1(1, 1).abs();
            for (j, l) in low {
                worst = worst.max(exp.c1(j, l).abs()).max(exp.c2(j, l).abs());
            }
            let c211 = exp.c2(1, 1);
            let used = t0.elapsed().as_secs_f64();
            c.metric(format!("vanishing_max({n},{p})"), worst);
            c.metric(format!("c2_11({n},{p})"), c211);
            c.require(
                worst <= 1e-6 && (c211 + 2.0).abs() <= 1e-6 && used < 30.0,
                format!("({n},{p}) vanishing ≤ {worst:.1e}, c₂(1,1) = {c211:.9}, {used:.1} s"),
            );
        }
        Ok(c)
    }

    fn residual_order(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let base = self.params_33()?;
        let fit = self.cfg.fit.clone();
        let bs: Vec<f64> =
            (0..fit.b_points).map(|i| fit.b_min * (fit.b_max / fit.b_min).powf(i as f64 / (fit.b_points - 1) as f64)).collect();
        for k in [5usize, 6] {
            let params = base.with_expansion_order(k);
            let exp = self.expansion(&params)?;
            let norms = bs
                .iter()
                .map(|&b| residual_psi_with(exp, b, 0.0, ResidualOptions { cutoff: false }).map(|r| r.1))
                .collect::<Result<Vec<f64>>>()?;
            let slope = power_law_fit(&bs, &norms, (fit.b_min, fit.b_max))?.exponent;
            c.metric(format!("slope_k{k}"), slope);
            c.require(slope >= k as f64 - 0.3, format!("k = {k}: slope {slope:.3} ≥ {}", k as f64 - 0.3));
        }
        c.budget(start, 300.0);
        Ok(c)
    }

    fn decay(&mut self, _start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let params = self.params_33()?;
        let window = (20.0, 55.0);
        let coarse = self.expansion_at(&params, 0.02)?.clone();
        let fine = self.expansion_at(&params, 0.01)?;
        let mut worst = 0.0f64;
        let mut finite = true;
        for &(j, l) in coarse.t.keys() {
            let (a, b) = (coarse.decay_constant(j, l, window), fine.decay_constant(j, l, window));
            finite &= a.is_finite() && b.is_finite();
            if a.max(b) > 0.0 {
                let d = rel(b, a);
                c.metric(format!("decay({j},{l})"), a);
                worst = worst.max(d);
            }
        }
        c.metric("worst_change", worst);
        c.require(finite, "constants finite".into());
        c.require(worst <= 0.05, format!("largest relative change under h: 0.02 → 0.01 is {worst:.1e}"));
        Ok(c)
    }

    fn ode_exponents(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let params = self.params_33()?;
        let decades = self.cfg.fit.ode_decades;
        let traj = self.trajectory()?;
        let ex = physical_exponents(&params, traj, decades)?;
        for (name, fit, want) in [("lambda", ex.lambda, ex.expected[0]), ("r", ex.r, ex.expected[1]), ("gamma", ex.gamma, ex.expected[2])] {
            c.metric(format!("exponent_{name}"), fit.exponent);
            c.require(rel(fit.exponent, want) <= 0.02, format!("{name}: {:.5} vs {want:.5}", fit.exponent));
        }
        // |b(1−α)s − 1| · s / ln s must stay bounded: its sup over the last decade may not
        // exceed the sup over the first one.
        let a = params.alpha;
        let s_max = traj.states.last().map_or(0.0, |m| m.s);
        let s_min = traj.states[0].s;
        let q: Vec<(f64, f64)> = traj
            .states
            .iter()
            .filter(|m| m.s >= 10.0 * s_min)
            .map(|m| (m.s, (m.b * (1.0 - a) * m.s - 1.0).abs() * m.s / m.s.ln()))
            .collect();
        let first = q.iter().filter(|v| v.0 <= 100.0 * s_min).map(|v| v.1).fold(0.0, f64::max);
        let last = q.iter().filter(|v| v.0 >= s_max / 10.0).map(|v| v.1).fold(0.0, f64::max);
        let end = traj.states.last().map_or(f64::NAN, |m| m.b * (1.0 - a) * m.s);
        c.metric("b_law_end", end);
        c.metric("b_law_c_first", first);
        c.metric("b_law_c_last", last);
        c.require(last <= first, format!("b(1−α)s = {end:.8} at s = {s_max:.0e}, C(log s/s) {last:.3} ≤ {first:.3}"));
        c.budget(start, 30.0);
        Ok(c)
    }

    fn perturbed(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let params = self.params_33()?;
        let polys = Polynomials::from_expansion(self.expansion(&params)?);
        let pc = self.cfg.perturbed.clone();
        let mode = self.cfg.forcing_mode();
        let traj = self.trajectory()?;
        let (tb, tu) = (traj.at_s(pc.s_bar).t, traj.at_s(pc.s_under).t);
        let run = integrate_perturbed(&params, &polys, traj, pc.forcing_scale, tb, tu, mode)?;
        let fit = run.fit.ok_or_else(|| Error::Numerical("no difference decay fit".into()))?;
        c.metric("exponent", fit.exponent);
        c.metric("predicted", run.predicted);
        c.require(rel(fit.exponent, run.predicted) <= 0.1, format!("decay exponent {:.4} vs {:.4}", fit.exponent, run.predicted));
        c.budget(start, 60.0);
        Ok(c)
    }

    fn determinant(&mut self, _start: Instant) -> Result<Check> {
        let mut c = Check::new();
        for (n, p) in TEST_MATRIX {
            let params = make_params(n, p, None)?;
            let exp = self.expansion(&params)?.clone();
            let t0 = Instant::now();
            let d = jacobian_determinant(&exp, 1e-4, 0.0)?;
            let want = determinant_limit(p);
            let used = t0.elapsed().as_secs_f64();
            c.metric(format!("det({n},{p})"), d);
            c.require(rel(d, want) <= 1e-3 && used < 10.0, format!("({n},{p}) {d:.6} vs {want:.6}, {used:.1} s"));
        }
        Ok(c)
    }

    fn round_trip(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let params = self.params_33()?;
        let exp = self.expansion(&params)?.clone();
        let m = modulated_state(&params, 0.1, 1.0, 0.3, 0.0, 0.0, 0.0);
        let grid = RadialGrid::new(4.0, (1 << 14) + 1)?;
        let f = ansatz_field(&exp, &m, grid);
        let shift = |d: &DecompResult| {
            let a = &d.modulation;
            [(a.lambda - m.lambda) / m.lambda, (a.r - m.r) / m.lambda, a.gamma - m.gamma, a.btilde - m.btilde]
        };
        let norm = |v: &[f64; 4]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let guess = ModState { lambda: 0.101, r: 1.002, gamma: 0.31, btilde: 1e-3, ..m };
        let d = decompose(&f, &guess, &exp)?;
        let worst = shift(&d).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        c.metric("round_trip_shift", worst);
        c.metric("round_trip_eps", d.eps_h1mu);
        c.require(worst <= 1e-8 && d.eps_h1mu <= 1e-8, format!("recovery {worst:.1e}, ‖ε‖ {:.1e}", d.eps_h1mu));

        let amp = m.lambda.powf(-params.amp_exp());
        let bump = |r: f64| Complex64::new(1.0, 0.5) * amp * (-(r - 1.03f64).powi(2) / (2.0 * 0.04 * 0.04)).exp();
        let shifted = |a: f64| -> Result<[f64; 4]> {
            let g = WaveField { u: f.u.iter().enumerate().map(|(i, z)| z + a * bump(grid.node(i))).collect(), ..f.clone() };
            Ok(shift(&decompose_with(&g, &m, &exp, &self.cfg.decomp_options())?))
        };
        let a0 = 1e-6;
        let (p, q) = (shifted(a0)?, shifted(-a0)?);
        let slope: [f64; 4] = std::array::from_fn(|k| (p[k] - q[k]) / (2.0 * a0));
        for a in [1e-4, 1e-3, 1e-2] {
            let s = shifted(a)?;
            let dev = norm(&std::array::from_fn(|k| s[k] / a - slope[k])) / norm(&slope);
            c.metric(format!("linearity_dev({a:e})"), dev);
            c.require(dev <= 0.05, format!("amplitude {a:e}: deviation {:.2}%", 100.0 * dev));
        }
        c.budget(start, 60.0);
        Ok(c)
    }

    fn coercivity(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        for (n, p) in TEST_MATRIX {
            let params = make_params(n, p, None)?;
            let fine = coercivity_min_eig(&eval_groundstate(&params, self.grid(0.02)?))?;
            let coarse = coercivity_min_eig(&eval_groundstate(&params, self.grid(0.04)?))?;
            c.metric(format!("min_eig({n},{p})"), fine);
            c.require(fine > 0.0 && rel(coarse, fine) <= 0.02, format!("({n},{p}) min eig {fine:.6} (h = 0.04: {coarse:.6})"));
        }
        let params = self.params_33()?;
        let exp = self.expansion(&params)?.clone();
        let sbar = self.cfg.sbar;
        let m = {
            let st = self.trajectory()?.at_s(sbar);
            st.rescaled(&params, st.r)
        };
        let grid = RadialGrid::new(4.0, 1 << 15)?;
        let solver = RadialSolver::for_params(grid, &params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let (mut worst, mut best) = (f64::INFINITY, 0.0f64);
        for _ in 0..self.cfg.decomp.coercivity_samples {
            let u = random_orthogonal_error(&exp, &m, grid, self.cfg.decomp.coercivity_size, &mut rng)?;
            let r = energy_morawetz_i(&solver, &u, &m, &exp)?.ratio;
            worst = worst.min(r);
            best = best.max(r);
        }
        c.metric("ratio_min", worst);
        c.metric("ratio_max", best);
        c.require(
            worst > COERCIVITY_BASELINE,
            format!(
                "{} random fields: ratio ∈ [{worst:.4}, {best:.4}], baseline {COERCIVITY_BASELINE}",
                self.cfg.decomp.coercivity_samples
            ),
        );
        c.budget(start, 300.0);
        Ok(c)
    }

    /// Runs the (3,3) ring simulation and decomposes its snapshot groups, once.
    pub fn simulation_artifacts(&mut self) -> Result<&SimArtifacts> {
        if self.sim.is_none() {
            let built = self.build_simulation().map_err(|e| e.to_string());
            self.sim = Some(built);
        }
        match self.sim.as_ref().expect("just set") {
            Ok(a) => Ok(a),
            Err(e) => Err(Error::Numerical(format!("simulation: {e}"))),
        }
    }

    fn build_simulation(&mut self) -> Result<SimArtifacts> {
        let params = self.params_33()?;
        let exp = self.expansion(&params)?.clone();
        let (tbar, sbar) = (self.cfg.tbar, self.cfg.sbar);
        let traj = self.trajectory()?;
        let at = match tbar {
            Some(t) => *traj.at_t(t).ok_or_else(|| Error::Input("tbar outside the trajectory".into()))?,
            None => *traj.at_s(sbar),
        };
        let launch = at.rescaled(&params, at.r);
        let run = run_to_blowup(&exp, &launch, &self.cfg.sim_options())?;
        let virial = check_virial_bound(&run.rows, run.report.t_est, params.alpha)?;
        let groups = decompose_groups(&run.snapshots, self.cfg.sim.snapshot_group, &exp, &self.cfg)?;
        Ok(SimArtifacts { run, launch, virial, groups })
    }

    fn simulation(&mut self, start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let art = self.simulation_artifacts()?;
        let rep = &art.run.report;
        c.metric("mass_drift", rep.mass_drift);
        c.metric("rate_exponent", rep.rate.exponent);
        c.metric("radius_exponent", rep.radius.exponent);
        c.metric("t_est", rep.t_est);
        c.require(rep.mass_drift <= 1e-5, format!("mass drift {:.1e}", rep.mass_drift));
        let g_span = fit_span(&art.run, rep.rate.window);
        c.metric("fit_amplification", g_span);
        c.require(g_span >= 10.0, format!("fit spans gradient growth ×{g_span:.1}"));
        c.require(
            rel(rep.rate.exponent, rep.expected[0]) <= 0.15,
            format!("‖∇u‖ exponent {:.4} vs {:.4}", rep.rate.exponent, rep.expected[0]),
        );
        c.require(
            rel(rep.radius.exponent, rep.expected[1]) <= 0.15,
            format!("radius exponent {:.4} vs {:.4}", rep.radius.exponent, rep.expected[1]),
        );
        let spread = virial_spread(&art.virial, rep.t_est);
        c.metric("virial_spread", spread);
        c.require(spread <= 3.0, format!("virial ratio spread {spread:.3} over the final decade"));
        c.budget(start, 1800.0);
        Ok(c)
    }

    fn mod_bound(&mut self, _start: Instant) -> Result<Check> {
        let mut c = Check::new();
        let k = self.params_33()?.k as i32;
        let art = self.simulation_artifacts()?;
        let window = art.run.report.rate.window;
        let t_est = art.run.report.t_est;
        let mut worst = 0.0f64;
        let mut nodes = 0;
        let mut parts = [0.0f64; 4];
        for g in &art.groups {
            for (i, d) in g.defects.iter().enumerate() {
                let m = &g.states[i + 1];
                let tau = t_est - m.t;
                if !(tau >= window.0 && tau <= window.1) {
                    continue;
                }
                let bound = m.b * g.eps_h1mu[i + 1] + m.b.powi(k);
                worst = worst.max(d.total / bound);
                for (p, v) in parts.iter_mut().zip([d.radius, d.phase, d.scale, d.drift]) {
                    *p = p.max(v / bound);
                }
                nodes += 1;
            }
        }
        for (name, v) in ["radius", "phase", "scale", "drift"].iter().zip(parts) {
            c.metric(format!("worst_constant_{name}"), v);
        }
        c.metric("worst_constant", worst);
        c.metric("nodes", nodes as f64);
        c.require(nodes >= 3, format!("{nodes} nodes in the trusted window"));
        c.require(worst <= 10.0, format!("max Mod/(b‖ε‖ + b^k) = {worst:.2} ≤ 10"));
        Ok(c)
    }
}

/// Gradient growth across the fit window of a run.
fn fit_span(run: &SimRun, window: (f64, f64)) -> f64 {
    let t_est = run.report.t_est;
    let inside: Vec<f64> = run.rows.iter().filter(|r| t_est - r.t >= window.0 && t_est - r.t <= window.1).map(|r| r.grad_norm).collect();
    match (inside.first(), inside.last()) {
        (Some(a), Some(b)) => b / a,
        _ => 0.0,
    }
}

/// Max/min of the virial ratio over `T − t ≤ 10 (T − t_last)`.
pub fn virial_spread(ratio: &[(f64, f64)], t_est: f64) -> f64 {
    let tau_end = ratio.last().map_or(0.0, |r| t_est - r.0);
    let vals: Vec<f64> = ratio.iter().filter(|(t, _)| t_est - t <= 10.0 * tau_end).map(|r| r.1).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(0.0, f64::max);
    hi / lo
}

/// Decomposes consecutive groups of `group` snapshots, each seeded from its predecessor,
/// and evaluates the modulation defects inside every group.
pub fn decompose_groups(snapshots: &[WaveField], group: usize, exp: &ProfileExpansion, cfg: &RunConfig) -> Result<Vec<ModGroup>> {
    let opts = cfg.decomp_options();
    let mut out = Vec::new();
    let mut prev: Option<ModState> = None;
    for chunk in snapshots.chunks(group.max(1)) {
        let mut states = Vec::with_capacity(chunk.len());
        let mut eps_h1mu = Vec::with_capacity(chunk.len());
        for f in chunk {
            let guess = match prev {
                Some(p) if states.len() > 0 => ModState { t: f.t, ..p },
                _ => initial_guess(f, &exp.params),
            };
            let d = decompose_with(f, &guess, exp, &opts)?;
            prev = Some(d.modulation);
            states.push(d.modulation);
            eps_h1mu.push(d.eps_h1mu);
        }
        let defects = if states.len() >= 3 { mod_residuals(&states, exp)? } else { Vec::new() };
        out.push(ModGroup { states, eps_h1mu, defects });
    }
    Ok(out)
}
