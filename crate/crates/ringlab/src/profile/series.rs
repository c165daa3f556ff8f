//! Truncated bivariate power series in `(b, β̃)` with scalar or field coefficients.
//!
//! Coefficients are stored by total degree: slot `m(m+1)/2 + l` holds the
//! coefficient of `b^j β̃^l` with `m = j + l`.

use num_complex::Complex;

use crate::dd::{cdd_to_c64, cscale, Cdd, Dd};
use crate::error::{Error, Result};
use crate::numerics::{ComplexField, Grid1D};

#[inline]
pub fn n_coeffs(deg: usize) -> usize {
    (deg + 1) * (deg + 2) / 2
}

#[inline]
pub fn slot(j: usize, l: usize) -> usize {
    let m = j + l;
    m * (m + 1) / 2 + l
}

#[inline]
pub fn monomial(slot_index: usize) -> (usize, usize) {
    let mut m = 0;
    while n_coeffs(m) <= slot_index {
        m += 1;
    }
    let l = slot_index - m * (m + 1) / 2;
    (m - l, l)
}

/// All `(j, l)` with `j + l = m`, ordered by increasing `l`.
pub fn monomials_of_degree(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=m).map(move |l| (m - l, l))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSeries {
    pub deg: usize,
    pub c: Vec<Dd>,
}

impl ScalarSeries {
    pub fn zeros(deg: usize) -> ScalarSeries {
        ScalarSeries { deg, c: vec![Dd::ZERO; n_coeffs(deg)] }
    }

    pub fn constant(deg: usize, v: Dd) -> ScalarSeries {
        let mut s = ScalarSeries::zeros(deg);
        s.c[0] = v;
        s
    }

    pub fn monomial(deg: usize, j: usize, l: usize, v: Dd) -> ScalarSeries {
        let mut s = ScalarSeries::zeros(deg);
        if j + l <= deg {
            s.c[slot(j, l)] = v;
        }
        s
    }

    pub fn var_b(deg: usize) -> ScalarSeries {
        ScalarSeries::monomial(deg, 1, 0, Dd::ONE)
    }

    pub fn var_bt(deg: usize) -> ScalarSeries {
        ScalarSeries::monomial(deg, 0, 1, Dd::ONE)
    }

    /// `1/(β∞ + β̃)` expanded in `β̃`.
    pub fn inv_beta(deg: usize, beta_inf: f64) -> ScalarSeries {
        let mut s = ScalarSeries::zeros(deg);
        let ib = Dd::ONE / Dd::new(beta_inf);
        let mut v = ib;
        for l in 0..=deg {
            s.c[slot(0, l)] = v;
            v = -(v * ib);
        }
        s
    }

    pub fn get(&self, j: usize, l: usize) -> Dd {
        if j + l <= self.deg {
            self.c[slot(j, l)]
        } else {
            Dd::ZERO
        }
    }

    pub fn add(&self, o: &ScalarSeries) -> ScalarSeries {
        let deg = self.deg.min(o.deg);
        ScalarSeries { deg, c: (0..n_coeffs(deg)).map(|i| self.c[i] + o.c[i]).collect() }
    }

    pub fn scale(&self, v: Dd) -> ScalarSeries {
        ScalarSeries { deg: self.deg, c: self.c.iter().map(|&x| x * v).collect() }
    }

    pub fn mul(&self, o: &ScalarSeries) -> ScalarSeries {
        let deg = self.deg.min(o.deg);
        let mut out = ScalarSeries::zeros(deg);
        for ia in 0..n_coeffs(deg) {
            if self.c[ia].hi == 0.0 {
                continue;
            }
            let (ja, la) = monomial(ia);
            for ib in 0..n_coeffs(deg - (ja + la)) {
                let (jb, lb) = monomial(ib);
                out.c[slot(ja + jb, la + lb)] += self.c[ia] * o.c[ib];
            }
        }
        out
    }

    pub fn eval(&self, b: Dd, bt: Dd) -> Dd {
        let mut s = Dd::ZERO;
        for (i, &c) in self.c.iter().enumerate() {
            if c.hi != 0.0 {
                let (j, l) = monomial(i);
                s += c * b.powi(j as i32) * bt.powi(l as i32);
            }
        }
        s
    }
}

/// Series whose coefficients are complex fields on a common grid; `None` marks an exact zero.
#[derive(Clone, Debug)]
pub struct FieldSeries {
    pub deg: usize,
    pub n: usize,
    pub c: Vec<Option<Vec<Cdd>>>,
}

fn czero() -> Cdd {
    Complex::new(Dd::ZERO, Dd::ZERO)
}

impl FieldSeries {
    pub fn zeros(deg: usize, n: usize) -> FieldSeries {
        FieldSeries { deg, n, c: vec![None; n_coeffs(deg)] }
    }

    pub fn constant(deg: usize, f: Vec<Cdd>) -> FieldSeries {
        let mut s = FieldSeries::zeros(deg, f.len());
        s.c[0] = Some(f);
        s
    }

    pub fn set(&mut self, j: usize, l: usize, f: Vec<Cdd>) {
        assert_eq!(f.len(), self.n);
        if j + l <= self.deg {
            self.c[slot(j, l)] = Some(f);
        }
    }

    pub fn get(&self, j: usize, l: usize) -> Option<&Vec<Cdd>> {
        if j + l <= self.deg {
            self.c[slot(j, l)].as_ref()
        } else {
            None
        }
    }

    /// Coefficient of `b^j β̃^l` rounded to double precision.
    pub fn coeff(&self, grid: Grid1D, j: usize, l: usize) -> ComplexField {
        match self.get(j, l) {
            Some(f) => ComplexField { grid, values: f.iter().map(|&z| cdd_to_c64(z)).collect() },
            None => ComplexField::zeros(grid),
        }
    }

    pub fn truncate(&self, deg: usize) -> FieldSeries {
        let deg = deg.min(self.deg);
        FieldSeries { deg, n: self.n, c: self.c[..n_coeffs(deg)].to_vec() }
    }

    fn check(&self, o: &FieldSeries) -> Result<()> {
        if self.n != o.n {
            return Err(Error::GridMismatch(format!("series on {} vs {} nodes", self.n, o.n)));
        }
        Ok(())
    }

    pub fn add(&self, o: &FieldSeries) -> Result<FieldSeries> {
        self.check(o)?;
        let deg = self.deg.min(o.deg);
        let c = (0..n_coeffs(deg))
            .map(|i| match (&self.c[i], &o.c[i]) {
                (None, None) => None,
                (Some(a), None) => Some(a.clone()),
                (None, Some(b)) => Some(b.clone()),
                (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x + y).collect()),
            })
            .collect();
        Ok(FieldSeries { deg, n: self.n, c })
    }

    pub fn add_assign(&mut self, o: &FieldSeries) {
        let deg = self.deg.min(o.deg);
        for i in 0..n_coeffs(deg) {
            if let Some(b) = &o.c[i] {
                match &mut self.c[i] {
                    Some(a) => a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + y),
                    slot @ None => *slot = Some(b.clone()),
                }
            }
        }
    }

    pub fn scale(&self, v: Cdd) -> FieldSeries {
        let c = self.c.iter().map(|f| f.as_ref().map(|f| f.iter().map(|z| z * v).collect())).collect();
        FieldSeries { deg: self.deg, n: self.n, c }
    }

    pub fn scale_real(&self, v: Dd) -> FieldSeries {
        let c = self.c.iter().map(|f| f.as_ref().map(|f| f.iter().map(|&z| cscale(z, v)).collect())).collect();
        FieldSeries { deg: self.deg, n: self.n, c }
    }

    pub fn conj(&self) -> FieldSeries {
        let c = self.c.iter().map(|f| f.as_ref().map(|f| f.iter().map(|z| z.conj()).collect())).collect();
        FieldSeries { deg: self.deg, n: self.n, c }
    }

    /// Multiplies every coefficient pointwise by the real function `w`.
    pub fn mul_field(&self, w: &[Dd]) -> FieldSeries {
        let c = self.c.iter().map(|f| f.as_ref().map(|f| f.iter().zip(w).map(|(&z, &wi)| cscale(z, wi)).collect())).collect();
        FieldSeries { deg: self.deg, n: self.n, c }
    }

    pub fn map_coeffs(&self, f: impl Fn(usize, usize, &[Cdd]) -> Vec<Cdd>) -> FieldSeries {
        let c = self
            .c
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_ref().map(|v| {
                    let (j, l) = monomial(i);
                    f(j, l, v)
                })
            })
            .collect();
        FieldSeries { deg: self.deg, n: self.n, c }
    }

    /// Product with a scalar series, truncated at the smaller degree.
    pub fn mul_scalar(&self, s: &ScalarSeries) -> FieldSeries {
        let deg = self.deg.min(s.deg);
        let mut out = FieldSeries::zeros(deg, self.n);
        for ia in 0..n_coeffs(deg) {
            let Some(fa) = &self.c[ia] else { continue };
            let (ja, la) = monomial(ia);
            for ib in 0..n_coeffs(deg - (ja + la)) {
                let v = s.c[ib];
                if v.hi == 0.0 {
                    continue;
                }
                let (jb, lb) = monomial(ib);
                let k = slot(ja + jb, la + lb);
                let acc = out.c[k].get_or_insert_with(|| vec![czero(); self.n]);
                for (a, &z) in acc.iter_mut().zip(fa) {
                    *a = *a + cscale(z, v);
                }
            }
        }
        out
    }

    /// Series product keeping output degrees in `[lo, deg]`.
    pub fn mul_range(&self, o: &FieldSeries, lo: usize) -> Result<FieldSeries> {
        self.check(o)?;
        let deg = self.deg.min(o.deg);
        let mut out = FieldSeries::zeros(deg, self.n);
        for ia in 0..n_coeffs(deg) {
            let Some(fa) = &self.c[ia] else { continue };
            let (ja, la) = monomial(ia);
            for ib in 0..n_coeffs(deg - (ja + la)) {
                let Some(fb) = &o.c[ib] else { continue };
                let (jb, lb) = monomial(ib);
                if ja + la + jb + lb < lo {
                    continue;
                }
                let k = slot(ja + jb, la + lb);
                let acc = out.c[k].get_or_insert_with(|| vec![czero(); self.n]);
                for ((a, x), y) in acc.iter_mut().zip(fa).zip(fb) {
                    *a = *a + x * y;
                }
            }
        }
        Ok(out)
    }

    pub fn mul(&self, o: &FieldSeries) -> Result<FieldSeries> {
        self.mul_range(o, 0)
    }

    /// `1/u` for a series whose constant field has no zeros.
    pub fn invert_unit(&self) -> Result<FieldSeries> {
        let Some(u0) = &self.c[0] else {
            return Err(Error::Input("cannot invert a series with zero constant term".into()));
        };
        if u0.iter().any(|z| z.re.hi == 0.0 && z.im.hi == 0.0) {
            return Err(Error::Input("constant term vanishes somewhere on the grid".into()));
        }
        let one = Complex::new(Dd::ONE, Dd::ZERO);
        let w0: Vec<Cdd> = u0.iter().map(|z| one / z).collect();
        let mut out = FieldSeries::zeros(self.deg, self.n);
        out.c[0] = Some(w0.clone());
        for k in 1..n_coeffs(self.deg) {
            let (j, l) = monomial(k);
            let mut acc = vec![czero(); self.n];
            let mut any = false;
            for ja in 0..=j {
                for la in 0..=l {
                    if ja + la == 0 {
                        continue;
                    }
                    let (Some(ua), Some(wb)) = (&self.c[slot(ja, la)], &out.c[slot(j - ja, l - la)]) else {
                        continue;
                    };
                    any = true;
                    for ((a, x), y) in acc.iter_mut().zip(ua).zip(wb) {
                        *a = *a + x * y;
                    }
                }
            }
            if any {
                out.c[k] = Some(acc.iter().zip(&w0).map(|(a, w)| -(a * w)).collect());
            }
        }
        Ok(out)
    }

    /// Coefficients of `∂_b`.
    pub fn d_b(&self) -> FieldSeries {
        let mut out = FieldSeries::zeros(self.deg, self.n);
        for i in 0..n_coeffs(self.deg) {
            let (j, l) = monomial(i);
            if j == 0 {
                continue;
            }
            if let Some(f) = &self.c[i] {
                out.c[slot(j - 1, l)] = Some(f.iter().map(|&z| cscale(z, Dd::new(j as f64))).collect());
            }
        }
        out
    }

    /// Coefficients of `∂_β̃`.
    pub fn d_bt(&self) -> FieldSeries {
        let mut out = FieldSeries::zeros(self.deg, self.n);
        for i in 0..n_coeffs(self.deg) {
            let (j, l) = monomial(i);
            if l == 0 {
                continue;
            }
            if let Some(f) = &self.c[i] {
                out.c[slot(j, l - 1)] = Some(f.iter().map(|&z| cscale(z, Dd::new(l as f64))).collect());
            }
        }
        out
    }

    /// Pointwise sum `Σ c_{jl} b^j β̃^l`.
    pub fn eval(&self, b: Dd, bt: Dd) -> Vec<Cdd> {
        let mut acc = vec![czero(); self.n];
        for (i, f) in self.c.iter().enumerate() {
            let Some(f) = f else { continue };
            let (j, l) = monomial(i);
            let w = b.powi(j as i32) * bt.powi(l as i32);
            for (a, &z) in acc.iter_mut().zip(f) {
                *a = *a + cscale(z, w);
            }
        }
        acc
    }

    pub fn max_abs(&self, j: usize, l: usize) -> f64 {
        self.get(j, l).map_or(0.0, |f| f.iter().fold(0.0f64, |m, z| m.max(cdd_to_c64(*z).norm())))
    }
}

pub fn series_add(a: &FieldSeries, b: &FieldSeries) -> Result<FieldSeries> {
    a.add(b)
}

pub fn series_mul(a: &FieldSeries, b: &FieldSeries) -> Result<FieldSeries> {
    a.mul(b)
}

pub fn series_scale(a: &FieldSeries, v: Cdd) -> FieldSeries {
    a.scale(v)
}

pub fn series_invert_unit(a: &FieldSeries) -> Result<FieldSeries> {
    a.invert_unit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::cdd;
    use proptest::prelude::*;

    fn field(n: usize, f: impl Fn(usize) -> f64) -> Vec<Cdd> {
        (0..n).map(|i| cdd(f(i), 0.5 * f(i))).collect()
    }

    #[test]
    fn slot_round_trip() {
        for i in 0..n_coeffs(8) {
            let (j, l) = monomial(i);
            assert_eq!(slot(j, l), i);
        }
    }

    #[test]
    fn difference_of_squares() {
        let n = 17;
        let deg = 4;
        let f = field(n, |i| 0.1 * i as f64 - 0.3);
        let one = vec![cdd(1.0, 0.0); n];
        let mut a = FieldSeries::constant(deg, one.clone());
        a.set(1, 0, f.clone());
        let mut b = FieldSeries::constant(deg, one);
        b.set(1, 0, f.iter().map(|z| -z).collect());
        let p = a.mul(&b).unwrap();
        for i in 0..n_coeffs(deg) {
            let (j, l) = monomial(i);
            let expect: Vec<Cdd> = match (j, l) {
                (0, 0) => vec![cdd(1.0, 0.0); n],
                (2, 0) => f.iter().map(|z| -(z * z)).collect(),
                _ => vec![cdd(0.0, 0.0); n],
            };
            let got = p.get(j, l).cloned().unwrap_or_else(|| vec![cdd(0.0, 0.0); n]);
            for (g, e) in got.iter().zip(&expect) {
                assert!(cdd_to_c64(g - e).norm() < 1e-30);
            }
        }
    }

    #[test]
    fn geometric_inverse() {
        let n = 11;
        let deg = 6;
        let beta = 0.577_350_269_189_625_8;
        let alpha = 0.5;
        let ys: Vec<f64> = (0..n).map(|i| i as f64 - 5.0).collect();
        let mut u = FieldSeries::constant(deg, vec![cdd(1.0, 0.0); n]);
        let x: Vec<Cdd> = ys.iter().map(|&y| cdd(alpha * y / (2.0 * beta), 0.0)).collect();
        u.set(1, 0, x.clone());
        let w = u.invert_unit().unwrap();
        for j in 0..=deg {
            let f = w.get(j, 0).unwrap();
            for (i, z) in f.iter().enumerate() {
                let expect = (-alpha * ys[i] / (2.0 * beta)).powi(j as i32);
                assert!((z.re.to_f64() - expect).abs() <= 1e-13 * (1.0 + expect.abs()));
            }
            for l in 1..=(deg - j) {
                assert!(w.get(j, l).is_none());
            }
        }
    }

    #[test]
    fn invert_rejects_zero_constant() {
        let mut u = FieldSeries::zeros(3, 4);
        u.set(1, 0, vec![cdd(1.0, 0.0); 4]);
        assert!(u.invert_unit().is_err());
    }

    #[test]
    fn product_saturates_at_degree() {
        let n = 5;
        let deg = 3;
        let mut a = FieldSeries::zeros(deg, n);
        let mut b = FieldSeries::zeros(deg, n);
        for m in 0..=deg {
            for (j, l) in monomials_of_degree(m) {
                a.set(j, l, field(n, |i| (i + j) as f64));
                b.set(j, l, field(n, |i| (i * l) as f64 + 1.0));
            }
        }
        let p = a.mul(&b).unwrap();
        assert_eq!(p.deg, deg);
        assert_eq!(p.c.len(), n_coeffs(deg));
    }

    #[test]
    fn inv_beta_matches_reciprocal() {
        let s = ScalarSeries::inv_beta(8, 0.6);
        let v = s.eval(Dd::ZERO, Dd::new(0.01)).to_f64();
        assert!((v - 1.0 / 0.61).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn inverse_times_series_is_one(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, c3 in -1.0f64..1.0) {
            let n = 3;
            let deg = 5;
            let mut u = FieldSeries::constant(deg, vec![cdd(1.5, 0.2); n]);
            u.set(1, 0, vec![cdd(c1, 0.1); n]);
            u.set(0, 1, vec![cdd(c2, -c3); n]);
            u.set(1, 1, vec![cdd(c3, 0.0); n]);
            let w = u.invert_unit().unwrap();
            let p = u.mul(&w).unwrap();
            for i in 1..n_coeffs(deg) {
                if let Some(f) = &p.c[i] {
                    for z in f {
                        prop_assert!(cdd_to_c64(*z).norm() < 1e-28);
                    }
                }
            }
        }
    }
}
