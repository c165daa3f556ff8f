//! Command-line front end. Every subcommand resolves a [`RunConfig`] from the optional
//! config file and flag overrides, freezes it into the run directory and writes its
//! tables there.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::decomp::{decompose_with, energy_morawetz_i, initial_guess, write_decomp_series, DecompRow};
use crate::error::{Error, Result};
use crate::fit::{power_law_fit, PowerFit};
use crate::groundstate::{check_identities, eval_groundstate, ProblemParams};
use crate::modode::{integrate_exact, integrate_perturbed, physical_exponents, to_physical_time, ModTrajectory, Polynomials};
use crate::nlsim::{check_virial_bound, read_snapshot, run_to_blowup, write_diagnostics_csv, write_snapshot, RadialSolver, WaveField};
use crate::plot::{Plot, Series};
use crate::profile::{build_expansion, load_expansion, residual_psi_with, save_expansion, ProfileExpansion, ResidualOptions};
use crate::verify::{decompose_groups, virial_spread, Verifier, CRITERIA};

#[derive(Debug, Parser)]
#[command(name = "ringlab", version, about = "Collapsing-ring blow-up lab for the radial mass-supercritical NLS")]
#[command(after_help = "Exit codes: 0 pass, 1 invariant failure, 2 usage error, 3 numerical failure.\n\
The output directory is $RINGLAB_OUT/<output> (default ./run).")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML configuration; omitted keys take the defaults of the shipped ringlab.toml
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory below the output root; absolute paths are used as given [default: run]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Space dimension [default: 3]
    #[arg(long = "N", global = true)]
    pub n_dim: Option<usize>,
    /// Nonlinearity exponent [default: 3]
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Expansion order [default: max(5, ceil(2/(1-alpha)) + 2)]
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Seed for random forcing and random test fields [default: 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the profile expansion and check its constants and residual order
    Profile {
        /// Re-check a saved expansion in the run directory without rebuilding
        #[arg(long)]
        verify_only: bool,
    },
    /// Integrate the modulation equations
    Ode {
        /// Fit the physical-time exponents of λ, r and γ
        #[arg(long)]
        fit: bool,
        /// Integrate the b^k-forced system against the exact one
        #[arg(long)]
        perturbed: bool,
    },
    /// Simulate the radial PDE from well-prepared ring data
    Sim {
        /// Stop once ‖∇u‖ has grown by this factor [default: 30]
        #[arg(long)]
        until_amplification: Option<f64>,
        /// Number of snapshot levels to keep [default: 16]
        #[arg(long)]
        snapshots: Option<usize>,
        /// Decompose the saved snapshots afterwards
        #[arg(long)]
        decomp: bool,
    },
    /// Decompose the snapshots of a simulation directory
    Decomp {
        /// Directory written by `sim`
        #[arg(long)]
        input: PathBuf,
        /// Decompose every snapshot and write the Mod(t) series
        #[arg(long)]
        series: bool,
    },
    /// Run the acceptance checks
    VerifyAll {
        /// Comma-separated criterion numbers
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

/// Parses the command line and runs it, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn resolve_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &g.out {
        cfg.output = v.clone();
    }
    if let Some(v) = g.n_dim {
        cfg.n_dim = v;
    }
    if let Some(v) = g.p {
        cfg.p = v;
    }
    if g.k.is_some() {
        cfg.k = g.k;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<i32> {
    let mut cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Profile { verify_only } => cmd_profile(&cfg, verify_only),
        Command::Ode { fit, perturbed } => cmd_ode(&cfg, fit, perturbed),
        Command::Sim { until_amplification, snapshots, decomp } => {
            if let Some(a) = until_amplification {
                cfg.stop.amplification = a;
            }
            if let Some(n) = snapshots {
                cfg.sim.snapshots = n;
            }
            cmd_sim(&cfg, decomp)
        }
        Command::Decomp { input, series } => cmd_decomp(&input, series),
        Command::VerifyAll { only } => cmd_verify(&cfg, &only),
    }
}

fn prepare(cfg: &RunConfig) -> Result<(ProblemParams, PathBuf)> {
    let params = cfg.validate()?;
    let dir = cfg.run_dir();
    cfg.freeze(&dir)?;
    Ok((params, dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn build(cfg: &RunConfig, params: &ProblemParams) -> Result<ProfileExpansion> {
    build_expansion(params, &eval_groundstate(params, cfg.profile_grid()?))
}

fn trajectory(cfg: &RunConfig, params: &ProblemParams, exp: &ProfileExpansion) -> Result<ModTrajectory> {
    to_physical_time(&integrate_exact(params, &Polynomials::from_expansion(exp), &cfg.ode_options())?)
}

#[derive(Serialize)]
struct ResidualReport {
    k: usize,
    b: Vec<f64>,
    norm: Vec<f64>,
    slope: f64,
    required: f64,
}

fn cmd_profile(cfg: &RunConfig, verify_only: bool) -> Result<i32> {
    let (params, dir) = prepare(cfg)?;
    let pdir = dir.join("profile");
    let exp = if verify_only {
        let exp = load_expansion(&pdir)?;
        if exp.params != params {
            return Err(Error::Input(format!("saved expansion in {} was built for other parameters", pdir.display())));
        }
        exp
    } else {
        let exp = build(cfg, &params)?;
        save_expansion(&exp, &pdir)?;
        exp
    };

    let ids = check_identities(&exp.gs);
    write_csv(
        &dir.join("constants.csv"),
        "j,l,c1,c2",
        exp.c1.iter().map(|(&(j, l), &c1)| vec![j as f64, l as f64, c1, exp.c2.get(&(j, l)).copied().unwrap_or(f64::NAN)]),
    )?;
    println!("{:>3} {:>3} {:>16} {:>16}", "j", "l", "c1", "c2");
    for (&(j, l), &c1) in &exp.c1 {
        println!("{j:>3} {l:>3} {c1:>16.9e} {:>16.9e}", exp.c2(j, l));
    }

    let fit = &cfg.fit;
    let bs: Vec<f64> = (0..fit.b_points).map(|i| fit.b_min * (fit.b_max / fit.b_min).powf(i as f64 / (fit.b_points - 1) as f64)).collect();
    let norms =
        bs.iter().map(|&b| residual_psi_with(&exp, b, 0.0, ResidualOptions { cutoff: false }).map(|r| r.1)).collect::<Result<Vec<_>>>()?;
    let slope = power_law_fit(&bs, &norms, (fit.b_min, fit.b_max))?;
    let report = ResidualReport { k: params.k, b: bs.clone(), norm: norms.clone(), slope: slope.exponent, required: params.k as f64 - 0.3 };
    write_json(&dir.join("residual_slope.json"), &report)?;
    println!("residual slope {:.4} (k = {})", slope.exponent, params.k);
    if cfg.plots {
        Plot::new(format!("residual at k = {}", params.k), "b", "‖Ψ‖ in H¹_μ")
            .log_log()
            .with(Series::new("residual", bs.iter().copied().zip(norms.iter().copied()).collect()))
            .with(Series::from_fit(&slope))
            .write(&dir.join("residual.svg"))?;
    }

    let mut failures = Vec::new();
    if ids.pohozaev_defect > 1e-7 || ids.lam_q_defect > 1e-7 {
        failures.push(format!("ground-state identities: defects {:.1e}, {:.1e}", ids.pohozaev_defect, ids.lam_q_defect));
    }
    for (j, l) in [(1, 0), (0, 1), (2, 0), (0, 2)] {
        let worst = exp.c1(j, l).abs().max(exp.c2(j, l).abs());
        if worst > 1e-6 {
            failures.push(format!("constant at order ({j},{l}) = {worst:.1e} does not vanish"));
        }
    }
    if exp.c1(1, 1).abs() > 1e-6 {
        failures.push(format!("c1(1,1) = {:.1e} does not vanish", exp.c1(1, 1)));
    }
    if (exp.c2(1, 1) + 2.0).abs() > 1e-6 {
        failures.push(format!("c2(1,1) = {:.9} differs from -2", exp.c2(1, 1)));
    }
    if slope.exponent < report.required {
        failures.push(format!("residual slope {:.4} below {:.1}", slope.exponent, report.required));
    }
    match failures.first() {
        Some(f) => Err(Error::Invariant(f.clone())),
        None => Ok(0),
    }
}

#[derive(Serialize)]
struct ExponentReport {
    name: &'static str,
    fitted: f64,
    stderr: f64,
    theory: f64,
    delta: f64,
}

fn cmd_ode(cfg: &RunConfig, fit: bool, perturbed: bool) -> Result<i32> {
    let (params, dir) = prepare(cfg)?;
    let exp = build(cfg, &params)?;
    let traj = trajectory(cfg, &params, &exp)?;
    traj.write_csv(&dir.join("trajectory.csv"))?;
    let mut code = 0;
    if fit {
        let ex = physical_exponents(&params, &traj, cfg.fit.ode_decades)?;
        let fits: [(&str, &PowerFit); 3] = [("lambda", &ex.lambda), ("r", &ex.r), ("gamma", &ex.gamma)];
        let rows: Vec<ExponentReport> = fits
            .iter()
            .zip(ex.expected)
            .map(|((name, f), want)| ExponentReport { name, fitted: f.exponent, stderr: f.stderr, theory: want, delta: f.exponent - want })
            .collect();
        for r in &rows {
            println!("{:>7}: {:.6} (theory {:.6}, delta {:+.2e})", r.name, r.fitted, r.theory, r.delta);
            if (r.delta / r.theory).abs() > 0.02 {
                code = 1;
            }
        }
        write_json(&dir.join("exponents.json"), &rows)?;
        if cfg.plots {
            let abs_t: Vec<f64> = traj.states.iter().map(|m| m.t.abs()).collect();
            let mut plot = Plot::new("modulation parameters", "|t|", "value").log_log();
            for ((name, f), col) in fits.iter().zip([traj.column(|m| m.lambda), traj.column(|m| m.r), traj.column(|m| m.gamma)]) {
                plot = plot.with(Series::new(*name, abs_t.iter().copied().zip(col).collect())).with(Series::from_fit(f));
            }
            plot.write(&dir.join("exponents.svg"))?;
        }
    }
    if perturbed {
        let pc = &cfg.perturbed;
        let (tb, tu) = (traj.at_s(pc.s_bar).t, traj.at_s(pc.s_under).t);
        let run = integrate_perturbed(&params, &Polynomials::from_expansion(&exp), &traj, pc.forcing_scale, tb, tu, cfg.forcing_mode())?;
        write_csv(
            &dir.join("perturbed.csv"),
            "abs_t,db,dbtilde,dg,dgamma",
            (0..run.abs_t.len()).map(|i| vec![run.abs_t[i], run.db[i], run.dbtilde[i], run.dg[i], run.dgamma[i]]),
        )?;
        write_json(&dir.join("perturbed.json"), &run.fit)?;
        match &run.fit {
            Some(f) => {
                println!("difference decay exponent {:.4} (predicted {:.4})", f.exponent, run.predicted);
                if ((f.exponent - run.predicted) / run.predicted).abs() > 0.1 {
                    code = 1;
                }
            }
            None => return Err(Error::Numerical("differences left the bootstrap regime before a fit".into())),
        }
    }
    Ok(code)
}

fn cmd_sim(cfg: &RunConfig, decomp: bool) -> Result<i32> {
    let (params, dir) = prepare(cfg)?;
    let exp = build(cfg, &params)?;
    save_expansion(&exp, &dir.join("profile"))?;
    let traj = trajectory(cfg, &params, &exp)?;
    let at = match cfg.tbar {
        Some(t) => *traj.at_t(t).ok_or_else(|| Error::Input(format!("tbar = {t} lies outside the trajectory")))?,
        None => *traj.at_s(cfg.sbar),
    };
    let launch = at.rescaled(&params, at.r);
    let run = run_to_blowup(&exp, &launch, &cfg.sim_options())?;
    let rep = &run.report;
    write_diagnostics_csv(&run.rows, &dir.join("diagnostics.csv"))?;
    write_json(&dir.join("report.json"), rep)?;
    let virial = check_virial_bound(&run.rows, rep.t_est, params.alpha)?;
    write_csv(&dir.join("virial.csv"), "t,ratio", virial.iter().map(|&(t, v)| vec![t, v]))?;

    let sdir = dir.join("snapshots");
    std::fs::create_dir_all(&sdir)?;
    let mut names = Vec::new();
    for (i, f) in run.snapshots.iter().enumerate() {
        let name = format!("{i:04}.bin");
        write_snapshot(f, &sdir.join(&name))?;
        names.push(name);
    }
    write_json(&sdir.join("index.json"), &names)?;

    println!("{} steps, stop {:?}, T ≈ {:.9e}", rep.steps, rep.stop, rep.t_est);
    println!(
        "‖∇u‖ exponent {:.4} (theory {:.4}), radius exponent {:.4} (theory {:.4})",
        rep.rate.exponent, rep.expected[0], rep.radius.exponent, rep.expected[1]
    );
    println!("mass drift {:.2e}, virial spread {:.3}", rep.mass_drift, virial_spread(&virial, rep.t_est));

    if cfg.plots {
        let tau: Vec<f64> = run.rows.iter().map(|r| rep.t_est - r.t).collect();
        let col = |f: fn(&crate::nlsim::DiagnosticsRow) -> f64| tau.iter().copied().zip(run.rows.iter().map(f)).collect::<Vec<_>>();
        Plot::new("gradient norm", "T − t", "‖∇u‖")
            .log_log()
            .with(Series::new("‖∇u‖", col(|r| r.grad_norm)))
            .with(Series::from_fit(&rep.rate))
            .write(&dir.join("rate.svg"))?;
        Plot::new("ring radius", "T − t", "r")
            .log_log()
            .with(Series::new("r", col(|r| r.r_est)))
            .with(Series::from_fit(&rep.radius))
            .write(&dir.join("radius.svg"))?;
        Plot::new("virial ratio", "T − t", "ratio")
            .log_log()
            .with(Series::new("ratio", virial.iter().map(|&(t, v)| (rep.t_est - t, v)).collect()))
            .write(&dir.join("virial.svg"))?;
    }
    if decomp {
        return cmd_decomp(&dir, true);
    }
    Ok(0)
}

#[derive(Serialize)]
struct FunctionalRow {
    t: f64,
    kinetic: f64,
    mass: f64,
    nonlinear: f64,
    morawetz: f64,
    total: f64,
    ratio: f64,
}

fn cmd_decomp(input: &Path, series: bool) -> Result<i32> {
    let cfg = RunConfig::load(&input.join("config.toml"))?;
    let exp = load_expansion(&input.join("profile"))?;
    let sdir = input.join("snapshots");
    let names: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(sdir.join("index.json")).map_err(|e| Error::Input(format!("{}: {e}", sdir.display())))?,
    )?;
    let mut fields: Vec<WaveField> = names.iter().map(|n| read_snapshot(&sdir.join(n))).collect::<Result<_>>()?;
    if fields.is_empty() {
        return Err(Error::Input(format!("{} holds no snapshots", sdir.display())));
    }
    if !series {
        fields = vec![fields.pop().expect("non-empty")];
    }
    let opts = cfg.decomp_options();
    let solver = RadialSolver::for_params(fields[0].grid, &exp.params)?;
    let mut rows = Vec::new();
    let mut functional = Vec::new();
    if series {
        let groups = decompose_groups(&fields, cfg.sim.snapshot_group, &exp, &cfg)?;
        let mut k = 0;
        for g in &groups {
            for (i, m) in g.states.iter().enumerate() {
                let modt = if i >= 1 && i + 1 < g.states.len() { g.defects[i - 1].total } else { f64::NAN };
                let d = decompose_with(&fields[k], m, &exp, &opts)?;
                rows.push(DecompRow::new(&d, modt));
                functional.push(functional_row(&solver, &d, &fields[k], &exp)?);
                k += 1;
            }
        }
    } else {
        let f = &fields[0];
        let d = decompose_with(f, &initial_guess(f, &exp.params), &exp, &opts)?;
        rows.push(DecompRow::new(&d, f64::NAN));
        functional.push(functional_row(&solver, &d, f, &exp)?);
    }
    write_decomp_series(&rows, &input.join("decomp_series.csv"))?;
    write_json(&input.join("functional.json"), &functional)?;
    let k = exp.params.k as i32;
    println!("{:>14} {:>11} {:>11} {:>11} {:>11} {:>11}", "t", "λ", "b", "‖ε‖", "Mod", "bound");
    for r in &rows {
        println!(
            "{:>14.7e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}",
            r.t,
            r.lambda,
            r.b,
            r.eps_h1mu,
            r.mod_total,
            10.0 * (r.b * r.eps_h1mu + r.b.powi(k))
        );
    }
    if cfg.plots && series {
        let mods: Vec<(f64, f64)> = rows.iter().filter(|r| r.mod_total.is_finite()).map(|r| (r.lambda, r.mod_total)).collect();
        if !mods.is_empty() {
            let bound =
                rows.iter().filter(|r| r.mod_total.is_finite()).map(|r| (r.lambda, 10.0 * (r.b * r.eps_h1mu + r.b.powi(k)))).collect();
            Plot::new("modulation defects", "λ", "Mod")
                .log_log()
                .with(Series::new("Mod", mods))
                .with(Series { dashed: true, ..Series::new("bound", bound) })
                .write(&input.join("mod.svg"))?;
        }
    }
    Ok(0)
}

fn functional_row(solver: &RadialSolver, d: &crate::decomp::DecompResult, f: &WaveField, exp: &ProfileExpansion) -> Result<FunctionalRow> {
    let r = energy_morawetz_i(solver, &d.u_tilde(f.grid, exp.params.p), &d.modulation, exp)?;
    Ok(FunctionalRow {
        t: d.modulation.t,
        kinetic: r.kinetic,
        mass: r.mass,
        nonlinear: r.nonlinear,
        morawetz: r.morawetz,
        total: r.total,
        ratio: r.ratio,
    })
}

fn cmd_verify(cfg: &RunConfig, only: &[u8]) -> Result<i32> {
    let (_, dir) = prepare(cfg)?;
    let ids: Vec<u8> = if only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|&&i| !CRITERIA.iter().any(|c| c.0 == i)) {
        return Err(Error::Input(format!("no criterion {bad}; valid ids are 1 to {}", CRITERIA.len())));
    }
    let mut v = Verifier::new(cfg.clone());
    let outcomes = v.run_all(&ids, |o| println!("{}", o.line()));
    write_json(&dir.join("verify.json"), &outcomes)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

#[cfg(test)]
mod tests;
