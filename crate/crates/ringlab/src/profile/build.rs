//! The order-by-order recursion for `(T_{j,l}, S_{j,l}, c_{1,j,l}, c_{2,j,l})`.

use num_complex::Complex;

use super::series::{monomials_of_degree, n_coeffs, slot, FieldSeries, ScalarSeries};
use crate::dd::{cdd, cscale, Cdd, Dd};
use crate::error::{Error, Result};
use crate::groundstate::{q_dd, ProblemParams};
use crate::linops::{d1_zero_ghost, d2_zero_ghost, schrodinger_matrix};
use crate::numerics::{simpson_weights, BandedLu, Grid1D};

/// Ground-state data in double-double on the profile grid.
#[derive(Clone, Debug)]
pub(crate) struct Core {
    pub params: ProblemParams,
    pub grid: Grid1D,
    pub y: Vec<Dd>,
    pub q: Vec<Dd>,
    pub qp: Vec<Dd>,
    pub qpp: Vec<Dd>,
    pub qpow: Vec<Dd>,
    pub qinv: Vec<Dd>,
    pub lam_q: Vec<Dd>,
    pub y_q: Vec<Dd>,
    pub w: Vec<f64>,
}

impl Core {
    pub fn new(params: &ProblemParams, grid: Grid1D) -> Core {
        let p = params.p;
        let y: Vec<Dd> = grid.nodes().into_iter().map(Dd::new).collect();
        let (q, qp): (Vec<Dd>, Vec<Dd>) = y.iter().map(|&yi| q_dd(p, yi)).unzip();
        let qpow: Vec<Dd> = q.iter().map(|&v| pow_dd(v, p)).collect();
        let qpp = q.iter().zip(&qpow).map(|(&a, &b)| a - b).collect();
        let qinv = q.iter().map(|&v| if v.hi < 1e-200 { Dd::ZERO } else { v.recip() }).collect();
        let c = Dd::new(2.0) / Dd::new(p - 1.0);
        let lam_q = q.iter().zip(&qp).zip(&y).map(|((&a, &b), &yi)| c * a + yi * b).collect();
        let y_q = q.iter().zip(&y).map(|(&a, &yi)| a * yi).collect();
        Core { params: params.clone(), grid, y, q, qp, qpp, qpow, qinv, lam_q, y_q, w: simpson_weights(&grid) }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn complex(v: &[Dd]) -> Vec<Cdd> {
        v.iter().map(|&x| Complex::new(x, Dd::ZERO)).collect()
    }

    /// First `y`-derivative of a series: analytic on the `(0,0)` slot, the zero-ghost stencil elsewhere.
    pub fn d1(&self, s: &FieldSeries) -> FieldSeries {
        let h = self.grid.h;
        s.map_coeffs(|j, l, f| if j + l == 0 { Core::complex(&self.qp) } else { d1_zero_ghost(f, h) })
    }

    pub fn d2(&self, s: &FieldSeries) -> FieldSeries {
        let h = self.grid.h;
        s.map_coeffs(|j, l, f| if j + l == 0 { Core::complex(&self.qpp) } else { d2_zero_ghost(f, h) })
    }

    pub fn sdot(&self, a: &[Dd], b: &[Dd]) -> Dd {
        a.iter().zip(b).zip(&self.w).map(|((x, y), &w)| (*x * *y).mul_f64(w)).sum()
    }
}

pub(crate) fn pow_dd(x: Dd, p: f64) -> Dd {
    if p.fract() == 0.0 {
        x.powi(p as i32)
    } else if x.hi <= 0.0 {
        Dd::ZERO
    } else {
        x.powf(p)
    }
}

fn edot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Generalized binomial coefficients `C(a, n)`, `n = 0..=d`.
fn binomials(a: f64, d: usize) -> Vec<Dd> {
    let mut out = vec![Dd::ONE];
    for n in 1..=d {
        let prev = out[n - 1];
        out.push(prev * Dd::new(a - (n as f64 - 1.0)) / Dd::new(n as f64));
    }
    out
}

/// Series of `|P|^{p−1}P` with `P₀₀ = Q`, keeping output degrees in `[lo, deg]`.
pub(crate) fn nonlinearity(core: &Core, pser: &FieldSeries, lo: usize) -> Result<FieldSeries> {
    let deg = pser.deg;
    let n = core.n();
    let p = core.params.p;
    let mut z = FieldSeries::zeros(deg, n);
    for i in 1..n_coeffs(deg) {
        if let Some(f) = &pser.c[i] {
            z.c[i] = Some(f.iter().zip(&core.qinv).map(|(&v, &qi)| cscale(v, qi)).collect());
        }
    }
    let one = || {
        let mut s = FieldSeries::zeros(deg, n);
        s.c[0] = Some(vec![cdd(1.0, 0.0); n]);
        s
    };
    let ca = binomials((p + 1.0) / 2.0, deg);
    let cb = binomials((p - 1.0) / 2.0, deg);
    let mut fa = one();
    let mut fb = one();
    let mut zn = z.clone();
    for nn in 1..=deg {
        if ca[nn].hi != 0.0 {
            fa.add_assign(&zn.scale_real(ca[nn]));
        }
        if cb[nn].hi != 0.0 {
            fb.add_assign(&zn.conj().scale_real(cb[nn]));
        }
        if nn < deg {
            zn = zn.mul(&z)?;
        }
    }
    Ok(fa.mul_range(&fb, lo)?.mul_field(&core.qpow))
}

/// Scalar series needed by the equation.
pub(crate) struct Scalars {
    pub b: ScalarSeries,
    pub beta: ScalarSeries,
    pub invb: ScalarSeries,
    pub a: ScalarSeries,
}

impl Scalars {
    pub fn new(params: &ProblemParams, deg: usize) -> Scalars {
        let b = ScalarSeries::var_b(deg);
        let beta = ScalarSeries::constant(deg, Dd::new(params.beta_inf)).add(&ScalarSeries::var_bt(deg));
        let invb = ScalarSeries::inv_beta(deg, params.beta_inf);
        let a = b.mul(&invb).scale(Dd::new(params.alpha / 2.0));
        Scalars { b, beta, invb, a }
    }
}

/// Left side of the profile equation as a series, keeping output degrees in `[lo, deg]`.
pub(crate) fn equation_series(core: &Core, pser: &FieldSeries, p1: &ScalarSeries, p2: &ScalarSeries, lo: usize) -> Result<FieldSeries> {
    let deg = pser.deg;
    let n = core.n();
    let pr = &core.params;
    let nm1 = (pr.n_dim - 1) as f64;
    let sc = Scalars::new(pr, deg);
    let i1 = cdd(0.0, 1.0);

    let pp = core.d1(pser);
    let ppp = core.d2(pser);
    let yp = pser.mul_field(&core.y);
    let y2p = yp.mul_field(&core.y);
    let lam_p = pser.scale_real(Dd::new(2.0 / (pr.p - 1.0))).add(&pp.mul_field(&core.y))?;

    let b_invb = sc.b.mul(&sc.invb);
    let tau = sc.b.mul(&sc.b).scale(Dd::new(-(1.0 - pr.alpha))).add(&b_invb.mul(p2)).add(&sc.b.mul(p1));

    let mut e = pser.d_b().mul_scalar(&tau).scale(i1);
    e.add_assign(&pser.d_bt().mul_scalar(p2).scale(i1));
    e.add_assign(&pser.scale_real(-Dd::ONE));
    e.add_assign(&ppp);

    let mut g = FieldSeries::zeros(deg, n);
    let mut apow = sc.a.clone();
    let mut ypow: Vec<Dd> = vec![Dd::ONE; n];
    for _ in 0..deg {
        for i in 0..n_coeffs(deg) {
            let c = apow.c[i];
            if c.hi == 0.0 {
                continue;
            }
            let acc = g.c[i].get_or_insert_with(|| vec![cdd(0.0, 0.0); n]);
            for (a, &yv) in acc.iter_mut().zip(&ypow) {
                *a = *a + Complex::new(c * yv, Dd::ZERO);
            }
        }
        apow = apow.mul(&sc.a);
        for (v, &yi) in ypow.iter_mut().zip(&core.y) {
            *v = -(*v * yi);
        }
    }
    let mut wser = pp.scale_real(Dd::new(nm1));
    wser.add_assign(&yp.mul_scalar(&sc.b).scale(cdd(0.0, -nm1 * (1.0 - pr.alpha) / 2.0)));
    e.add_assign(&g.mul_range(&wser, lo)?);

    e.add_assign(&nonlinearity(core, pser, lo)?);

    e.add_assign(&lam_p.mul_scalar(p1).scale(cdd(0.0, -1.0)));
    let yscal = p1.mul(&sc.beta).scale(-Dd::ONE).add(p2).add(&sc.b.mul(&sc.beta));
    e.add_assign(&yp.mul_scalar(&yscal));
    let y2scal = p1
        .mul(&sc.b)
        .scale(Dd::new(-0.5))
        .add(&sc.b.mul(&sc.b).scale(Dd::new(pr.alpha / 4.0)))
        .add(&b_invb.mul(p2).scale(Dd::new(0.25)))
        .add(&sc.b.mul(p1).scale(Dd::new(0.25)));
    e.add_assign(&y2p.mul_scalar(&y2scal));
    Ok(e)
}

/// Normalized near-null vector of a discrete operator and its Rayleigh quotient.
pub(crate) fn near_kernel(lu: &BandedLu<Dd>, start: &[Dd], apply: impl Fn(&[Dd]) -> Vec<Dd>) -> (Vec<Dd>, Dd) {
    let mut x = start.to_vec();
    for _ in 0..4 {
        x = lu.solve(&x);
        let nrm = edot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v = *v / nrm);
    }
    let sign = if edot(&x, start).hi < 0.0 { -Dd::ONE } else { Dd::ONE };
    x.iter_mut().for_each(|v| *v = *v * sign);
    let lx = apply(&x);
    (x.clone(), edot(&x, &lx))
}

/// Per-monomial record of one recursion step.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StepReport {
    pub j: usize,
    pub l: usize,
    pub c1: f64,
    pub c2: f64,
    pub rhs_norm: f64,
    pub solvability_plus: f64,
    pub solvability_minus: f64,
    pub gauge_plus: f64,
    pub gauge_minus: f64,
}

pub(crate) struct Recursion {
    pub pser: FieldSeries,
    pub p1: ScalarSeries,
    pub p2: ScalarSeries,
    pub reports: Vec<StepReport>,
    pub kernel_eig: (f64, f64),
}

pub(crate) fn run(core: &Core, max_deg: usize) -> Result<Recursion> {
    let n = core.n();
    let h = core.grid.h;
    let p = core.params.p;
    let vplus: Vec<Dd> = core.q.iter().map(|&q| pow_dd(q, p - 1.0).mul_f64(p)).collect();
    let vminus: Vec<Dd> = core.q.iter().map(|&q| pow_dd(q, p - 1.0)).collect();
    let mplus = schrodinger_matrix(&vplus, h);
    let mminus = schrodinger_matrix(&vminus, h);
    let lu_plus = mplus.factor()?;
    let lu_minus = mminus.factor()?;
    let (vhat, eig_plus) = near_kernel(&lu_plus, &core.qp, |x| mplus.matvec(x));
    let (qhat, eig_minus) = near_kernel(&lu_minus, &core.q, |x| mminus.matvec(x));

    let mut pser = FieldSeries::zeros(max_deg, n);
    pser.c[0] = Some(core.q.iter().map(|&q| Complex::new(q, Dd::ZERO)).collect());
    let mut p1 = ScalarSeries::zeros(max_deg);
    let mut p2 = ScalarSeries::zeros(max_deg);
    let mut reports = Vec::new();

    let lamq_q = edot(&core.lam_q, &qhat);
    let yq_v = edot(&core.y_q, &vhat);
    let qp_v = core.sdot(&vhat, &core.qp);
    let q_q = core.sdot(&qhat, &core.q);
    let beta_inf = Dd::new(core.params.beta_inf);

    for m in 1..=max_deg {
        let e = equation_series(core, &pser.truncate(m), &p1_trunc(&p1, m), &p1_trunc(&p2, m), m)?;
        let c2_10 = p2.get(1, 0);
        for (j, l) in monomials_of_degree(m).collect::<Vec<_>>().into_iter().rev() {
            let mut hf: Vec<Cdd> = e.get(j, l).cloned().unwrap_or_else(|| vec![cdd(0.0, 0.0); n]);
            if j >= 1 && m > 1 {
                if let Some(prev) = pser.get(j - 1, l + 1) {
                    let s = c2_10 * Dd::new((l + 1) as f64);
                    for (a, &v) in hf.iter_mut().zip(prev) {
                        *a = *a + Complex::new(-(v.im * s), v.re * s);
                    }
                }
            }
            let h1: Vec<Dd> = hf.iter().map(|z| z.re).collect();
            let h2: Vec<Dd> = hf.iter().map(|z| z.im).collect();
            let c1 = edot(&h2, &qhat) / lamq_q;
            let c2 = (c1 * beta_inf * yq_v - edot(&h1, &vhat)) / yq_v;
            let rhs1: Vec<Dd> = h1.iter().zip(&core.y_q).map(|(&a, &yq)| a + (c2 - c1 * beta_inf) * yq).collect();
            let rhs2: Vec<Dd> = h2.iter().zip(&core.lam_q).map(|(&a, &lq)| a - c1 * lq).collect();
            let norm = |v: &[Dd]| edot(v, v).sqrt().to_f64();
            let rhs_norm = norm(&rhs1).max(norm(&rhs2));
            let sp = edot(&rhs1, &vhat).to_f64();
            let sm = edot(&rhs2, &qhat).to_f64();
            let scale = 1.0 + rhs_norm;
            if sp.abs() > 1e-20 * scale || sm.abs() > 1e-20 * scale {
                return Err(Error::Numerical(format!(
                    "order ({j},{l}): solvability defect {:e} above {:e}",
                    sp.abs().max(sm.abs()),
                    1e-20 * scale
                )));
            }
            let mut t = lu_plus.solve(&rhs1);
            let mut s = lu_minus.solve(&rhs2);
            let kt = core.sdot(&t, &core.qp) / qp_v;
            t.iter_mut().zip(&vhat).for_each(|(a, &v)| *a = *a - kt * v);
            let ks = core.sdot(&s, &core.q) / q_q;
            s.iter_mut().zip(&qhat).for_each(|(a, &v)| *a = *a - ks * v);
            let rel = |num: Dd, a: &[Dd], b: &[Dd]| {
                let d = (core.sdot(a, a) * core.sdot(b, b)).sqrt().to_f64();
                if d > 0.0 {
                    num.to_f64().abs() / d
                } else {
                    0.0
                }
            };
            let gauge_plus = rel(core.sdot(&t, &core.qp), &t, &core.qp);
            let gauge_minus = rel(core.sdot(&s, &core.q), &s, &core.q);
            if !t.iter().chain(&s).all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite profile at order ({j},{l})")));
            }
            pser.set(j, l, t.iter().zip(&s).map(|(&a, &b)| Complex::new(a, b)).collect());
            p1.c[slot(j, l)] = c1;
            p2.c[slot(j, l)] = c2;
            reports.push(StepReport {
                j,
                l,
                c1: c1.to_f64(),
                c2: c2.to_f64(),
                rhs_norm,
                solvability_plus: sp,
                solvability_minus: sm,
                gauge_plus,
                gauge_minus,
            });
        }
    }
    Ok(Recursion { pser, p1, p2, reports, kernel_eig: (eig_plus.to_f64(), eig_minus.to_f64()) })
}

fn p1_trunc(s: &ScalarSeries, deg: usize) -> ScalarSeries {
    ScalarSeries { deg, c: s.c[..n_coeffs(deg)].to_vec() }
}
