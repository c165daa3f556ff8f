//! Directory format: `meta.json` plus `T_j_l.csv` / `S_j_l.csv`, with the low words of the
//! double-double fields in `T_j_l.lo.csv` / `S_j_l.lo.csv`.

use std::fs;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::series::{monomials_of_degree, FieldSeries, ScalarSeries};
use super::{ProfileExpansion, StepReport};
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::groundstate::{eval_groundstate, ProblemParams};
use crate::numerics::{Grid1D, RealField};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub j: usize,
    pub l: usize,
    pub c1: f64,
    pub c2: f64,
    /// Low words of the double-double values.
    pub c1_lo: f64,
    pub c2_lo: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionMeta {
    pub params: ProblemParams,
    pub k: usize,
    pub degree: usize,
    pub grid: Grid1D,
    pub constants: Vec<ConstantEntry>,
    pub kernel_eig: (f64, f64),
    pub reports: Vec<StepReport>,
}

pub fn save_expansion(exp: &ProfileExpansion, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut constants = Vec::new();
    for m in 1..=exp.degree {
        for (j, l) in monomials_of_degree(m) {
            let (a, b) = (exp.p1.get(j, l), exp.p2.get(j, l));
            constants.push(ConstantEntry { j, l, c1: a.hi, c2: b.hi, c1_lo: a.lo, c2_lo: b.lo });
            exp.t[&(j, l)].write_csv(&dir.join(format!("T_{j}_{l}.csv")))?;
            exp.s[&(j, l)].write_csv(&dir.join(format!("S_{j}_{l}.csv")))?;
            let f = exp.pser.get(j, l).ok_or_else(|| Error::Input(format!("missing profile ({j}, {l})")))?;
            let grid = exp.grid();
            RealField::new(grid, f.iter().map(|z| z.re.lo).collect())?.write_csv(&dir.join(format!("T_{j}_{l}.lo.csv")))?;
            RealField::new(grid, f.iter().map(|z| z.im.lo).collect())?.write_csv(&dir.join(format!("S_{j}_{l}.lo.csv")))?;
        }
    }
    let meta = ExpansionMeta {
        params: exp.params.clone(),
        k: exp.params.k,
        degree: exp.degree,
        grid: exp.grid(),
        constants,
        kernel_eig: exp.kernel_eig,
        reports: exp.reports.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_expansion(dir: &Path) -> Result<ProfileExpansion> {
    let text = fs::read_to_string(dir.join("meta.json"))?;
    let meta: ExpansionMeta = serde_json::from_str(&text)?;
    let grid = meta.grid;
    let gs = eval_groundstate(&meta.params, grid);
    let n = grid.n;
    let mut pser = FieldSeries::zeros(meta.degree, n);
    let core = super::build::Core::new(&meta.params, grid);
    pser.c[0] = Some(core.q.iter().map(|&q| Complex::new(q, Dd::ZERO)).collect());
    let mut p1 = ScalarSeries::zeros(meta.degree);
    let mut p2 = ScalarSeries::zeros(meta.degree);
    for c in &meta.constants {
        if c.j + c.l > meta.degree {
            return Err(Error::Format(format!("constant ({}, {}) beyond degree {}", c.j, c.l, meta.degree)));
        }
        let t = RealField::read_csv(&dir.join(format!("T_{}_{}.csv", c.j, c.l)))?;
        let s = RealField::read_csv(&dir.join(format!("S_{}_{}.csv", c.j, c.l)))?;
        grid.check_same(&t.grid)?;
        grid.check_same(&s.grid)?;
        let lo = |name: String| -> Result<Vec<f64>> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(vec![0.0; n]);
            }
            let f = RealField::read_csv(&path)?;
            grid.check_same(&f.grid)?;
            Ok(f.values)
        };
        let (tl, sl) = (lo(format!("T_{}_{}.lo.csv", c.j, c.l))?, lo(format!("S_{}_{}.lo.csv", c.j, c.l))?);
        let field = (0..n).map(|i| Complex::new(Dd { hi: t.values[i], lo: tl[i] }, Dd { hi: s.values[i], lo: sl[i] })).collect();
        pser.set(c.j, c.l, field);
        let k = super::series::slot(c.j, c.l);
        p1.c[k] = Dd { hi: c.c1, lo: c.c1_lo };
        p2.c[k] = Dd { hi: c.c2, lo: c.c2_lo };
    }
    Ok(ProfileExpansion::from_parts(meta.params, gs, pser, p1, p2, meta.reports, meta.kernel_eig))
}
