//! Run configuration: a TOML file with the problem, grids, stopping rules and fit
//! windows. Every key has a default; `RunConfig::default()` is the reference setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decomp::DecompOptions;
use crate::error::{Error, Result};
use crate::groundstate::{make_params, ProblemParams};
use crate::modode::{ForcingMode, OdeOptions};
use crate::nlsim::SimOptions;
use crate::numerics::Grid1D;

/// Environment variable holding the output root.
pub const OUT_ENV: &str = "RINGLAB_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub p: f64,
    /// Expansion order; the smallest admissible default when absent.
    pub k: Option<usize>,
    /// Launch time on the unscaled trajectory; overrides `sbar` when set.
    pub tbar: Option<f64>,
    /// Launch point given by the reduced time `s`.
    pub sbar: f64,
    pub g0: f64,
    pub gamma0: f64,
    pub seed: u64,
    /// Run directory, relative to the output root.
    pub output: PathBuf,
    pub plots: bool,
    pub grid: GridConfig,
    pub stop: StopConfig,
    pub fit: FitConfig,
    pub ode: OdeConfig,
    pub sim: SimConfig,
    pub perturbed: PerturbedConfig,
    pub decomp: DecompConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Profile grid `[−y_max, y_max]` with spacing `h`.
    pub y_max: f64,
    pub h: f64,
    /// Radial nodes of the simulation grid.
    pub n_r: usize,
    /// `r_max` in units of the initial ring radius.
    pub r_max_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopConfig {
    pub amplification: f64,
    pub lambda_cells: f64,
    pub max_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Decades of `s` at the end of the trajectory used for the exponent fits.
    pub ode_decades: f64,
    /// Residual-order fit over `b ∈ [b_min, b_max]`.
    pub b_min: f64,
    pub b_max: f64,
    pub b_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeConfig {
    pub s0: f64,
    pub s_end: f64,
    pub rtol: f64,
    pub nodes_per_decade: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub cfl: f64,
    /// Splitting order, 2 or 4.
    pub order: u8,
    pub record_every: usize,
    pub snapshots: usize,
    pub snapshot_group: usize,
    pub snapshot_stride: usize,
    pub virial_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbedConfig {
    /// Reduced times of the start and end points of the backward integration.
    pub s_bar: f64,
    pub s_under: f64,
    pub forcing_scale: f64,
    /// Random forcing signs drawn from `seed` instead of uniform forcing.
    pub random: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompConfig {
    pub delta: f64,
    pub max_iter: usize,
    /// Random orthogonal error fields in the coercivity sweep.
    pub coercivity_samples: usize,
    pub coercivity_size: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_dim: 3,
            p: 3.0,
            k: None,
            tbar: None,
            sbar: 100.0,
            g0: 0.9,
            gamma0: 0.0,
            seed: 1,
            output: PathBuf::from("run"),
            plots: true,
            grid: GridConfig::default(),
            stop: StopConfig::default(),
            fit: FitConfig::default(),
            ode: OdeConfig::default(),
            sim: SimConfig::default(),
            perturbed: PerturbedConfig::default(),
            decomp: DecompConfig::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { y_max: 60.0, h: 0.02, n_r: 1 << 18, r_max_factor: 4.0 }
    }
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { amplification: 30.0, lambda_cells: 8.0, max_steps: 2_000_000 }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { ode_decades: 2.0, b_min: 1e-3, b_max: 10f64.powf(-1.5), b_points: 7 }
    }
}

impl Default for OdeConfig {
    fn default() -> Self {
        let o = OdeOptions::default();
        OdeConfig { s0: o.s0, s_end: o.s_end, rtol: o.rtol, nodes_per_decade: o.nodes_per_decade }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { cfl: 0.05, order: 2, record_every: 10, snapshots: 16, snapshot_group: 3, snapshot_stride: 8, virial_fraction: 0.3 }
    }
}

impl Default for PerturbedConfig {
    fn default() -> Self {
        PerturbedConfig { s_bar: 1e6, s_under: 1e3, forcing_scale: 1.0, random: false }
    }
}

impl Default for DecompConfig {
    fn default() -> Self {
        let d = DecompOptions::default();
        DecompConfig { delta: d.delta, max_iter: d.max_iter, coercivity_samples: 100, coercivity_size: 1e-3 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    /// Checks the problem against the admissibility rules and the option ranges.
    pub fn params(&self) -> Result<ProblemParams> {
        make_params(self.n_dim, self.p, self.k)
    }

    pub fn validate(&self) -> Result<ProblemParams> {
        let params = self.params()?;
        let bad = |what: &str| Err(Error::Input(format!("config: {what}")));
        if !(self.g0 > 0.5 && self.g0 < 1.0) {
            return bad("g0 must lie in (1/2, 1)");
        }
        if !(self.sbar > 0.0) || self.tbar.is_some_and(|t| !(t < 0.0)) {
            return bad("need sbar > 0 and tbar < 0");
        }
        if !(self.grid.y_max > 0.0 && self.grid.h > 0.0 && self.grid.h < self.grid.y_max) {
            return bad("profile grid needs 0 < h < y_max");
        }
        if self.grid.n_r < 64 || !(self.grid.r_max_factor > 1.0) {
            return bad("need n_r >= 64 and r_max_factor > 1");
        }
        if !(self.stop.amplification > 1.0) || !(self.stop.lambda_cells > 0.0) {
            return bad("need stop.amplification > 1 and stop.lambda_cells > 0");
        }
        if !(self.ode.s0 > 0.0 && self.ode.s_end > self.ode.s0) {
            return bad("need 0 < ode.s0 < ode.s_end");
        }
        if !(self.fit.b_min > 0.0 && self.fit.b_max > self.fit.b_min) || self.fit.b_points < 3 {
            return bad("need 0 < fit.b_min < fit.b_max and fit.b_points >= 3");
        }
        if !(self.sim.cfl > 0.0) || !(self.sim.order == 2 || self.sim.order == 4) {
            return bad("need sim.cfl > 0 and sim.order in {2, 4}");
        }
        if !(self.perturbed.s_bar > self.perturbed.s_under && self.perturbed.s_under >= self.ode.s0) {
            return bad("need ode.s0 <= perturbed.s_under < perturbed.s_bar");
        }
        if !(self.decomp.delta > 0.0) || self.decomp.max_iter == 0 {
            return bad("need decomp.delta > 0 and decomp.max_iter > 0");
        }
        Ok(params)
    }

    pub fn profile_grid(&self) -> Result<Grid1D> {
        Grid1D::with_spacing(-self.grid.y_max, self.grid.y_max, self.grid.h)
    }

    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            s0: self.ode.s0,
            g0: self.g0,
            gamma0: self.gamma0,
            s_end: self.ode.s_end,
            rtol: self.ode.rtol,
            nodes_per_decade: self.ode.nodes_per_decade,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            n_r: self.grid.n_r,
            r_max_factor: self.grid.r_max_factor,
            cfl: self.sim.cfl,
            amplification: self.stop.amplification,
            lambda_cells: self.stop.lambda_cells,
            max_steps: self.stop.max_steps,
            record_every: self.sim.record_every,
            snapshots: self.sim.snapshots,
            snapshot_group: self.sim.snapshot_group,
            snapshot_stride: self.sim.snapshot_stride,
            virial_fraction: self.sim.virial_fraction,
            order: self.sim.order,
            ..SimOptions::default()
        }
    }

    pub fn decomp_options(&self) -> DecompOptions {
        DecompOptions { delta: self.decomp.delta, max_iter: self.decomp.max_iter }
    }

    pub fn forcing_mode(&self) -> ForcingMode {
        if self.perturbed.random {
            ForcingMode::Random(self.seed)
        } else {
            ForcingMode::Uniform
        }
    }

    /// `$RINGLAB_OUT/<output>`, or `./<output>` without the variable.
    pub fn run_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        root.join(&self.output)
    }

    /// Creates the run directory and writes the resolved configuration into it.
    pub fn freeze(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = RunConfig { k: Some(7), tbar: Some(-1e-3), ..RunConfig::default() };
        c.sim.order = 2;
        c.perturbed.random = true;
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_sections_and_spec_keys() {
        let c = RunConfig::from_toml("N = 4\np = 2.5\n[stop]\namplification = 10.0\n[grid]\nn_r = 4096\n").unwrap();
        assert_eq!((c.n_dim, c.p), (4, 2.5));
        assert_eq!(c.stop.amplification, 10.0);
        assert_eq!(c.stop.lambda_cells, StopConfig::default().lambda_cells);
        assert_eq!(c.sim_options().n_r, 4096);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_toml("nn = 3"), Err(Error::Format(_))));
        assert!(matches!(RunConfig::from_toml("N = 3\np = 5.0").unwrap().validate(), Err(Error::Params(_))));
        assert!(matches!(RunConfig::from_toml("g0 = 1.5").unwrap().validate(), Err(Error::Input(_))));
        assert!(matches!(RunConfig::from_toml("[sim]\norder = 3").unwrap().validate(), Err(Error::Input(_))));
    }

    #[test]
    fn reference_file_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("ringlab.toml");
        assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
    }
}
