//! Linearized operators `L₊ = −∂² + 1 − pQ^{p−1}` and `L₋ = −∂² + 1 − Q^{p−1}`,
//! their kernel-bordered inverses and the constrained coercivity eigensolve.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::groundstate::GroundState;
use crate::numerics::{derivative_real, simpson_weights, BandedLu, BandedMatrix, RealField, Scalar};

/// Pentadiagonal `−D² + 1 − V` with the fourth-order stencil and zero ghost values.
pub(crate) fn schrodinger_matrix<T: Scalar>(potential: &[T], h: f64) -> BandedMatrix<T> {
    let n = potential.len();
    let s = 1.0 / (12.0 * h * h);
    let mut m = BandedMatrix::zeros(n, 2, 2);
    for i in 0..n {
        m.set(i, i, T::from_f64(30.0 * s + 1.0) - potential[i]);
        if i >= 1 {
            m.set(i, i - 1, T::from_f64(-16.0 * s));
        }
        if i >= 2 {
            m.set(i, i - 2, T::from_f64(s));
        }
        if i + 1 < n {
            m.set(i, i + 1, T::from_f64(-16.0 * s));
        }
        if i + 2 < n {
            m.set(i, i + 2, T::from_f64(s));
        }
    }
    m
}

/// The same fourth-order `D²` used inside [`schrodinger_matrix`].
pub(crate) fn d2_zero_ghost<T: Scalar>(v: &[T], h: f64) -> Vec<T> {
    let n = v.len();
    let s = T::from_f64(1.0 / (12.0 * h * h));
    let at = |i: isize| if i < 0 || i >= n as isize { T::zero() } else { v[i as usize] };
    (0..n as isize)
        .map(|i| (T::from_f64(16.0) * (at(i - 1) + at(i + 1)) - (at(i - 2) + at(i + 2)) - T::from_f64(30.0) * at(i)) * s)
        .collect()
}

/// Fourth-order `D¹` with zero ghost values.
pub(crate) fn d1_zero_ghost<T: Scalar>(v: &[T], h: f64) -> Vec<T> {
    let n = v.len();
    let s = T::from_f64(1.0 / (12.0 * h));
    let at = |i: isize| if i < 0 || i >= n as isize { T::zero() } else { v[i as usize] };
    (0..n as isize).map(|i| (T::from_f64(8.0) * (at(i + 1) - at(i - 1)) - (at(i + 2) - at(i - 2))) * s).collect()
}

/// Sixth-order central `D²` in the interior, the fourth-order closures of
/// [`derivative_real`] within three nodes of either end.
fn d2_sixth(v: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = v.len();
    let mut out = crate::numerics::diff(v, h, 2)?;
    let s = 1.0 / (180.0 * h * h);
    for i in 3..n.saturating_sub(3) {
        out[i] = s * (2.0 * (v[i - 3] + v[i + 3]) - 27.0 * (v[i - 2] + v[i + 2]) + 270.0 * (v[i - 1] + v[i + 1]) - 490.0 * v[i]);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LinearizedPair {
    pub gs: GroundState,
    pub lplus: BandedMatrix<f64>,
    pub lminus: BandedMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ConstrainedSolution {
    pub solution: RealField,
    pub multiplier: f64,
    pub solvability_defect: f64,
    pub gauge_defect: f64,
}

impl LinearizedPair {
    pub fn new(gs: &GroundState) -> LinearizedPair {
        let p = gs.params.p;
        let h = gs.grid().h;
        let vp: Vec<f64> = gs.q.values.iter().map(|q| p * q.powf(p - 1.0)).collect();
        let vm: Vec<f64> = gs.q.values.iter().map(|q| q.powf(p - 1.0)).collect();
        LinearizedPair { gs: gs.clone(), lplus: schrodinger_matrix(&vp, h), lminus: schrodinger_matrix(&vm, h) }
    }

    fn apply(&self, f: &RealField, coupling: f64) -> Result<RealField> {
        self.gs.grid().check_same(&f.grid)?;
        let p = self.gs.params.p;
        let d2 = d2_sixth(&f.values, f.grid.h)?;
        let values = (0..f.grid.n).map(|i| -d2[i] + f.values[i] - coupling * self.gs.q.values[i].powf(p - 1.0) * f.values[i]).collect();
        Ok(RealField { grid: f.grid, values })
    }

    pub fn apply_lplus(&self, f: &RealField) -> Result<RealField> {
        self.apply(f, self.gs.params.p)
    }

    pub fn apply_lminus(&self, f: &RealField) -> Result<RealField> {
        self.apply(f, 1.0)
    }

    pub fn solve_lplus(&self, h: &RealField, tol: f64) -> Result<ConstrainedSolution> {
        self.solve(&self.lplus, &self.gs.qp, h, tol)
    }

    pub fn solve_lminus(&self, h: &RealField, tol: f64) -> Result<ConstrainedSolution> {
        self.solve(&self.lminus, &self.gs.q, h, tol)
    }

    fn solve(&self, mat: &BandedMatrix<f64>, kernel: &RealField, h: &RealField, tol: f64) -> Result<ConstrainedSolution> {
        self.gs.grid().check_same(&h.grid)?;
        let w = simpson_weights(&h.grid);
        let defect = h.dot(kernel);
        let bound = tol * h.l2_norm() * kernel.l2_norm();
        if defect.abs() > bound && defect.abs() > 1e-300 {
            return Err(Error::Inconsistent { defect, bound });
        }
        let lu = mat.map(Dd::new).factor()?;
        let hv: Vec<Dd> = h.values.iter().map(|&v| Dd::new(v)).collect();
        let kv: Vec<Dd> = kernel.values.iter().map(|&v| Dd::new(v)).collect();
        let (t, mu) = bordered(&lu, &kv, &w, &hv);
        let solution = RealField::new(h.grid, t.iter().map(|v| v.to_f64()).collect())?;
        let tn = solution.l2_norm();
        let gauge_defect = if tn > 0.0 { solution.dot(kernel).abs() / (tn * kernel.l2_norm()) } else { 0.0 };
        Ok(ConstrainedSolution { solution, multiplier: mu.to_f64(), solvability_defect: defect, gauge_defect })
    }
}

/// Solves `L t + μ v = h`, `Σ wᵢ tᵢ vᵢ = 0` given the factors of `L`.
pub(crate) fn bordered(lu: &BandedLu<Dd>, v: &[Dd], w: &[f64], h: &[Dd]) -> (Vec<Dd>, Dd) {
    let x1 = lu.solve(h);
    let x2 = lu.solve(v);
    let dot = |a: &[Dd], b: &[Dd]| a.iter().zip(b).zip(w).map(|((x, y), &wi)| (*x * *y).mul_f64(wi)).sum::<Dd>();
    let mu = dot(&x1, v) / dot(&x2, v);
    let t = x1.iter().zip(&x2).map(|(a, b)| *a - mu * *b).collect();
    (t, mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub min_eig: f64,
    pub plus_part: f64,
    pub minus_part: f64,
    pub restarts: usize,
}

const KRYLOV_DIM: usize = 40;
const MAX_RESTARTS: usize = 60;

/// Smallest generalized eigenvalue of `(A, B)` restricted to `Cᵀx = 0`, with `A − σB` positive definite.
fn constrained_min_eig(
    a: &BandedMatrix<f64>,
    b: &BandedMatrix<f64>,
    constraints: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<(f64, usize)> {
    let n = a.n;
    let mut m = BandedMatrix::zeros(n, 2, 2);
    for i in 0..n {
        for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
            m.set(i, j, a.get(i, j) - sigma * b.get(i, j));
        }
    }
    let lu = m.factor()?;
    let nc = constraints.len();
    let y: Vec<Vec<f64>> = constraints.iter().map(|c| lu.solve(c)).collect();
    let dotv = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let ginv = if nc > 0 {
        let g = DMatrix::from_fn(nc, nc, |i, j| dotv(&constraints[i], &y[j]));
        Some(g.try_inverse().ok_or_else(|| Error::Numerical("degenerate constraint set".into()))?)
    } else {
        None
    };
    let project = |z: &mut Vec<f64>| {
        if let Some(gi) = &ginv {
            let r = DVector::from_iterator(nc, constraints.iter().map(|c| dotv(c, z)));
            let nu = gi * r;
            for (k, yk) in y.iter().enumerate() {
                for (zi, yi) in z.iter_mut().zip(yk) {
                    *zi -= nu[k] * yi;
                }
            }
        }
    };
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut z = lu.solve(&b.matvec(x));
        project(&mut z);
        z
    };
    let bnorm = |x: &[f64]| dotv(x, &b.matvec(x)).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut x = apply(&start);
    let mut theta_old = f64::INFINITY;
    for restart in 0..MAX_RESTARTS {
        let nx = bnorm(&x);
        let mut basis: Vec<Vec<f64>> = vec![x.iter().map(|v| v / nx).collect()];
        let mut bbasis: Vec<Vec<f64>> = vec![b.matvec(&basis[0])];
        while basis.len() < KRYLOV_DIM {
            let mut v = apply(basis.last().unwrap());
            let n0 = bnorm(&v);
            for _ in 0..2 {
                for (q, bq) in basis.iter().zip(&bbasis) {
                    let c = dotv(&v, bq);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= c * qi;
                    }
                }
                project(&mut v);
            }
            let nv = bnorm(&v);
            if !(nv > 1e-10 * n0) {
                break;
            }
            v.iter_mut().for_each(|vi| *vi /= nv);
            bbasis.push(b.matvec(&v));
            basis.push(v);
        }
        let k = basis.len();
        let av: Vec<Vec<f64>> = basis.iter().map(|q| a.matvec(q)).collect();
        let hm = DMatrix::from_fn(k, k, |i, j| 0.5 * (dotv(&basis[i], &av[j]) + dotv(&basis[j], &av[i])));
        let eig = SymmetricEigen::new(hm);
        let (imin, theta) =
            eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let wv = eig.eigenvectors.column(imin);
        x = vec![0.0; n];
        for (j, q) in basis.iter().enumerate() {
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi += wv[j] * qi;
            }
        }
        if (theta - theta_old).abs() <= 1e-12 * theta.abs().max(1e-3) {
            return Ok((theta, restart + 1));
        }
        theta_old = theta;
    }
    Err(Error::NoConvergence(format!("constrained eigensolve after {MAX_RESTARTS} restarts")))
}

fn h1_gram(n: usize, h: f64) -> BandedMatrix<f64> {
    let mut b = schrodinger_matrix(&vec![0.0; n], h);
    for i in 0..n {
        for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
            b.set(i, j, h * b.get(i, j));
        }
    }
    b
}

fn scaled(m: &BandedMatrix<f64>, h: f64) -> BandedMatrix<f64> {
    m.map(|v| v * h)
}

impl LinearizedPair {
    /// Minimum over both blocks of the constrained Rayleigh quotient
    /// `(L₊ε₁,ε₁)+(L₋ε₂,ε₂)` on the H¹ unit sphere with
    /// `(ε₁,Q)=(ε₁,yQ)=(ε₂,ΛQ)=0`.
    pub fn coercivity(&self) -> Result<CoercivityReport> {
        let grid = self.gs.grid();
        let (n, h) = (grid.n, grid.h);
        let p = self.gs.params.p;
        let b = h1_gram(n, h);
        let sigma = -(p * (p + 1.0) / 2.0);
        let c = |f: &RealField| f.values.iter().map(|v| v * h).collect::<Vec<f64>>();
        let (plus, r1) = constrained_min_eig(&scaled(&self.lplus, h), &b, &[c(&self.gs.q), c(&self.gs.y_q)], sigma, 11)?;
        let (minus, r2) = constrained_min_eig(&scaled(&self.lminus, h), &b, &[c(&self.gs.lam_q)], sigma, 13)?;
        Ok(CoercivityReport { min_eig: plus.min(minus), plus_part: plus, minus_part: minus, restarts: r1 + r2 })
    }

    /// Unconstrained minimum of `(L₊ε,ε)/‖ε‖²_{H¹}`.
    pub fn lplus_unconstrained_min(&self) -> Result<f64> {
        let grid = self.gs.grid();
        let p = self.gs.params.p;
        let b = h1_gram(grid.n, grid.h);
        constrained_min_eig(&scaled(&self.lplus, grid.h), &b, &[], -(p * (p + 1.0) / 2.0), 17).map(|r| r.0)
    }

    /// Quadratic form `(L₋f,f)/‖f‖²_{H¹}` by quadrature.
    pub fn lminus_quotient(&self, f: &RealField) -> Result<f64> {
        let lf = self.apply_lminus(f)?;
        let fp = derivative_real(f, 1)?;
        Ok(lf.dot(f) / (fp.dot(&fp) + f.dot(f)))
    }
}

pub fn coercivity_min_eig(gs: &GroundState) -> Result<f64> {
    Ok(LinearizedPair::new(gs).coercivity()?.min_eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::{eval_groundstate, make_params, TEST_MATRIX};
    use crate::numerics::Grid1D;

    fn pair(n: usize, p: f64) -> LinearizedPair {
        let pp = make_params(n, p, None).unwrap();
        LinearizedPair::new(&eval_groundstate(&pp, Grid1D::profile_default()))
    }

    fn interior_sup(f: &RealField) -> f64 {
        f.values[2..f.values.len() - 2].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn kernel_identities() {
        for (n, p) in TEST_MATRIX {
            let lp = pair(n, p);
            let gs = &lp.gs;
            assert!(interior_sup(&lp.apply_lminus(&gs.q).unwrap()) <= 1e-6);
            assert!(interior_sup(&lp.apply_lplus(&gs.qp).unwrap()) <= 1e-6);
            let r = lp.apply_lplus(&gs.lam_q).unwrap().zip_with(&gs.q, |a, q| a + 2.0 * q);
            assert!(interior_sup(&r) <= 1e-6);
            let r = lp.apply_lminus(&gs.y_q).unwrap().zip_with(&gs.qp, |a, qp| a + 2.0 * qp);
            assert!(interior_sup(&r) <= 1e-6);
        }
    }

    #[test]
    fn apply_zero_is_zero() {
        let lp = pair(3, 3.0);
        let z = RealField::zeros(lp.gs.grid());
        assert_eq!(lp.apply_lplus(&z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn matrix_matches_pointwise_application_in_interior() {
        let lp = pair(3, 3.0);
        let f = &lp.gs.lam_q;
        let a = lp.lplus.matvec(&f.values);
        let d2 = derivative_real(f, 2).unwrap();
        for i in 2..f.grid.n - 2 {
            let q = lp.gs.q.values[i];
            let b = -d2.values[i] + f.values[i] - 3.0 * q * q * f.values[i];
            assert!((a[i] - b).abs() < 1e-10);
        }
        let b = lp.apply_lplus(f).unwrap();
        for i in 3..f.grid.n - 3 {
            assert!((a[i] - b.values[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn solve_lminus_recovers_yq() {
        let lp = pair(3, 3.0);
        let h = lp.gs.qp.scaled(-2.0);
        let s = lp.solve_lminus(&h, 1e-6).unwrap();
        assert!(s.gauge_defect <= 1e-10);
        let err = s.solution.zip_with(&lp.gs.y_q, |a, b| a - b).max_abs();
        assert!(err < 1e-6, "err {err}");
        let back = lp.apply_lminus(&s.solution).unwrap().zip_with(&h, |a, b| a - b);
        assert!(interior_sup(&back) <= 1e-5 * h.max_abs());
    }

    #[test]
    fn solve_lplus_recovers_lambda_q() {
        let lp = pair(3, 3.0);
        let h = lp.gs.q.scaled(-2.0);
        let s = lp.solve_lplus(&h, 1e-6).unwrap();
        assert!(s.gauge_defect <= 1e-10);
        let lt = lp.lplus.matvec(&s.solution.values);
        let discrete = lt.iter().zip(&h.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(discrete <= 1e-6, "{discrete}");
        let back = lp.apply_lplus(&s.solution).unwrap().zip_with(&h, |a, b| a - b);
        assert!(interior_sup(&back) <= 1e-5 * h.max_abs());
        let err = s.solution.zip_with(&lp.gs.lam_q, |a, b| a - b).max_abs();
        assert!(err < 1e-6, "err {err}");
        assert!(s.multiplier.abs() < 1e-6);
    }

    #[test]
    fn solve_zero_rhs() {
        let lp = pair(3, 3.0);
        let s = lp.solve_lplus(&RealField::zeros(lp.gs.grid()), 1e-6).unwrap();
        assert_eq!(s.solution.max_abs(), 0.0);
        assert_eq!(s.multiplier, 0.0);
    }

    #[test]
    fn inconsistent_rhs_is_reported() {
        let lp = pair(3, 3.0);
        let h = lp.gs.qp.clone();
        assert!(matches!(lp.solve_lplus(&h, 1e-6), Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn unconstrained_lplus_has_negative_direction() {
        assert!(pair(3, 3.0).lplus_unconstrained_min().unwrap() < 0.0);
    }

    #[test]
    fn q_prime_gives_positive_lminus_form() {
        let lp = pair(3, 3.0);
        assert!(lp.gs.qp.dot(&lp.gs.lam_q).abs() < 1e-12);
        assert!(lp.lminus_quotient(&lp.gs.qp).unwrap() > 0.0);
    }

    #[test]
    fn coercivity_matches_dense_oracle_on_coarse_grid() {
        let pp = make_params(3, 3.0, None).unwrap();
        let grid = Grid1D::new(-15.0, 15.0, 1501).unwrap();
        let gs = eval_groundstate(&pp, grid);
        let lp = LinearizedPair::new(&gs);

        let (n, h) = (grid.n, grid.h);
        let dense = |m: &BandedMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let b = dense(&h1_gram(n, h));
        let oracle = |a: DMatrix<f64>, cons: Vec<&RealField>| -> f64 {
            let c = DMatrix::from_fn(n, cons.len(), |i, j| cons[j].values[i]);
            let qr = c.clone().qr();
            let q_full = {
                let mut m = DMatrix::<f64>::identity(n, n);
                qr.q_tr_mul(&mut m);
                m.transpose()
            };
            let z = q_full.columns(cons.len(), n - cons.len()).into_owned();
            let az = z.transpose() * &a * &z;
            let bz = z.transpose() * &b * &z;
            let l = bz.cholesky().unwrap().l();
            let li = l.clone().try_inverse().unwrap();
            let s = &li * az * li.transpose();
            let s = (&s + s.transpose()) * 0.5;
            SymmetricEigen::new(s).eigenvalues.min()
        };
        let plus = oracle(dense(&lp.lplus) * h, vec![&gs.q, &gs.y_q]);
        let minus = oracle(dense(&lp.lminus) * h, vec![&gs.lam_q]);
        eprintln!("oracle {plus} {minus}");
        let krylov = lp.coercivity().unwrap();
        assert!((krylov.plus_part - plus).abs() < 1e-7 * plus.abs(), "{} vs {plus}", krylov.plus_part);
        assert!((krylov.minus_part - minus).abs() < 1e-7 * minus.abs(), "{} vs {minus}", krylov.minus_part);
        assert!(krylov.min_eig > 0.0);

        let unc = SymmetricEigen::new({
            let l = b.clone().cholesky().unwrap().l();
            let li = l.try_inverse().unwrap();
            let s = &li * (dense(&lp.lplus) * h) * li.transpose();
            (&s + s.transpose()) * 0.5
        })
        .eigenvalues
        .min();
        assert!(unc < 0.0);
        assert!((lp.lplus_unconstrained_min().unwrap() - unc).abs() < 1e-7 * unc.abs());
    }

    #[test]
    fn coercivity_positive_and_grid_stable() {
        let pp = make_params(3, 3.0, None).unwrap();
        let fine = coercivity_min_eig(&eval_groundstate(&pp, Grid1D::with_spacing(-60.0, 60.0, 0.02).unwrap())).unwrap();
        let coarse = coercivity_min_eig(&eval_groundstate(&pp, Grid1D::with_spacing(-60.0, 60.0, 0.04).unwrap())).unwrap();
        assert!(fine > 0.0);
        assert!((fine - coarse).abs() <= 0.02 * fine, "{fine} vs {coarse}");
    }
}
