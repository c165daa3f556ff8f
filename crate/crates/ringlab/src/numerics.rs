//! Grids, sampled fields, quadrature, finite differences, weighted norms and
//! banded direct solves.

use std::fmt::Write as _;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::path::Path;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dd::{Cdd, Dd};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub y_min: f64,
    pub y_max: f64,
    pub n: usize,
    pub h: f64,
}

impl Grid1D {
    pub fn new(y_min: f64, y_max: f64, n: usize) -> Result<Grid1D> {
        if !(y_min.is_finite() && y_max.is_finite()) || y_min >= y_max {
            return Err(Error::Input(format!("bad grid interval [{y_min}, {y_max}]")));
        }
        if n < 16 {
            return Err(Error::Input(format!("grid needs at least 16 nodes, got {n}")));
        }
        Ok(Grid1D { y_min, y_max, n, h: (y_max - y_min) / (n - 1) as f64 })
    }

    pub fn with_spacing(y_min: f64, y_max: f64, h: f64) -> Result<Grid1D> {
        if !(h > 0.0) {
            return Err(Error::Input(format!("grid spacing must be positive, got {h}")));
        }
        let n = ((y_max - y_min) / h).round() as usize + 1;
        Grid1D::new(y_min, y_max, n)
    }

    /// Default profile grid `[-60, 60]` with `h = 0.02`.
    pub fn profile_default() -> Grid1D {
        Grid1D::new(-60.0, 60.0, 6001).expect("static grid")
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.y_min + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node nearest to `y`, clamped to the grid.
    pub fn nearest(&self, y: f64) -> usize {
        let i = ((y - self.y_min) / self.h).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.n == other.n
            && (self.y_min - other.y_min).abs() <= 1e-12 * (1.0 + self.y_min.abs())
            && (self.y_max - other.y_max).abs() <= 1e-12 * (1.0 + self.y_max.abs())
    }

    pub fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
}

impl RealField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<RealField> {
        if values.len() != grid.n {
            return Err(Error::Input(format!("{} samples for {} nodes", values.len(), grid.n)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite sample at node {i}")));
        }
        Ok(RealField { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> RealField {
        RealField { grid, values: (0..grid.n).map(|i| f(grid.node(i))).collect() }
    }

    pub fn zeros(grid: Grid1D) -> RealField {
        RealField { grid, values: vec![0.0; grid.n] }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> RealField {
        RealField { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn zip_with(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> RealField {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        RealField { grid: self.grid, values }
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> RealField {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(self.grid.node(i), v)).collect();
        RealField { grid: self.grid, values }
    }

    /// Simpson inner product `∫ f g`.
    pub fn dot(&self, other: &RealField) -> f64 {
        let w = simpson_weights(&self.grid);
        self.values.iter().zip(&other.values).zip(&w).map(|((a, b), w)| a * b * w).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("y,value\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(s, "{:.16e},{:.16e}", self.grid.node(i), v).unwrap();
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<RealField> {
        let rows = read_csv_rows(path, 2)?;
        let grid = grid_from_nodes(&rows.iter().map(|r| r[0]).collect::<Vec<_>>())?;
        RealField::new(grid, rows.iter().map(|r| r[1]).collect())
    }
}

impl ComplexField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<ComplexField> {
        if values.len() != grid.n {
            return Err(Error::Input(format!("{} samples for {} nodes", values.len(), grid.n)));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Input(format!("non-finite sample at node {i}")));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> ComplexField {
        ComplexField { grid, values: (0..grid.n).map(|i| f(grid.node(i))).collect() }
    }

    pub fn zeros(grid: Grid1D) -> ComplexField {
        ComplexField { grid, values: vec![Complex64::zero(); grid.n] }
    }

    pub fn re(&self) -> RealField {
        RealField { grid: self.grid, values: self.values.iter().map(|v| v.re).collect() }
    }

    pub fn im(&self) -> RealField {
        RealField { grid: self.grid, values: self.values.iter().map(|v| v.im).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scaled(&self, c: Complex64) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("y,re,im\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(s, "{:.16e},{:.16e},{:.16e}", self.grid.node(i), v.re, v.im).unwrap();
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ComplexField> {
        let rows = read_csv_rows(path, 3)?;
        let grid = grid_from_nodes(&rows.iter().map(|r| r[0]).collect::<Vec<_>>())?;
        ComplexField::new(grid, rows.iter().map(|r| Complex64::new(r[1], r[2])).collect())
    }
}

fn read_csv_rows(path: &Path, cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        if vals.len() != cols {
            return Err(Error::Format(format!("{}:{}: expected {cols} columns", path.display(), ln + 1)));
        }
        rows.push(vals);
    }
    Ok(rows)
}

fn grid_from_nodes(y: &[f64]) -> Result<Grid1D> {
    if y.len() < 16 {
        return Err(Error::Format("too few rows for a grid".into()));
    }
    let g = Grid1D::new(y[0], y[y.len() - 1], y.len())?;
    for (i, &v) in y.iter().enumerate() {
        if (v - g.node(i)).abs() > 1e-9 * (1.0 + v.abs()) {
            return Err(Error::Input("nonuniform grid rejected".into()));
        }
    }
    Ok(g)
}

/// Composite Simpson weights; an odd interval count closes with one trapezoid panel.
pub fn simpson_weights(grid: &Grid1D) -> Vec<f64> {
    let n = grid.n;
    let h = grid.h;
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 2 };
    for (i, wi) in w.iter_mut().enumerate().take(simpson_end + 1) {
        *wi = if i == 0 || i == simpson_end {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    if simpson_end != n - 1 {
        w[n - 2] += h / 2.0;
        w[n - 1] += h / 2.0;
    }
    w
}

pub fn integrate(f: &RealField) -> Result<f64> {
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite integrand".into()));
    }
    let w = simpson_weights(&f.grid);
    Ok(f.values.iter().zip(&w).map(|(v, w)| v * w).sum())
}

/// Field element types for which finite differences and banded solves are defined.
pub trait Scalar:
    Copy + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> + 'static
{
    fn from_f64(x: f64) -> Self;
    fn magnitude(&self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Scalar for Dd {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Dd::new(x)
    }
    #[inline]
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }
}

impl Scalar for Cdd {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Cdd::new(Dd::new(x), Dd::ZERO)
    }
    #[inline]
    fn magnitude(&self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }
}

const D1_CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D1_EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
const D2_CENTRAL: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
const D2_EDGE0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
const D2_EDGE1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];

fn stencil<T: Scalar>(v: &[T], start: usize, c: &[f64], sign: f64) -> T {
    c.iter().enumerate().fold(T::zero(), |acc, (k, &ck)| acc + v[start + k] * T::from_f64(sign * ck))
}

fn stencil_rev<T: Scalar>(v: &[T], end: usize, c: &[f64], sign: f64) -> T {
    c.iter().enumerate().fold(T::zero(), |acc, (k, &ck)| acc + v[end - k] * T::from_f64(sign * ck))
}

/// Fourth-order finite differences with one-sided closures at both ends.
pub fn diff<T: Scalar>(v: &[T], h: f64, order: u8) -> Result<Vec<T>> {
    let n = v.len();
    if n < 6 {
        return Err(Error::Input(format!("{n} nodes is below the stencil width")));
    }
    let mut out = vec![T::zero(); n];
    match order {
        1 => {
            let s = 1.0 / (12.0 * h);
            for i in 2..n - 2 {
                out[i] = stencil(v, i - 2, &D1_CENTRAL, s);
            }
            out[0] = stencil(v, 0, &D1_EDGE0, s);
            out[1] = stencil(v, 0, &D1_EDGE1, s);
            out[n - 1] = stencil_rev(v, n - 1, &D1_EDGE0, -s);
            out[n - 2] = stencil_rev(v, n - 1, &D1_EDGE1, -s);
        }
        2 => {
            let s = 1.0 / (12.0 * h * h);
            for i in 2..n - 2 {
                out[i] = stencil(v, i - 2, &D2_CENTRAL, s);
            }
            out[0] = stencil(v, 0, &D2_EDGE0, s);
            out[1] = stencil(v, 0, &D2_EDGE1, s);
            out[n - 1] = stencil_rev(v, n - 1, &D2_EDGE0, s);
            out[n - 2] = stencil_rev(v, n - 1, &D2_EDGE1, s);
        }
        _ => return Err(Error::Input(format!("derivative order {order} unsupported"))),
    }
    Ok(out)
}

pub fn derivative(f: &ComplexField, order: u8) -> Result<ComplexField> {
    Ok(ComplexField { grid: f.grid, values: diff(&f.values, f.grid.h, order)? })
}

pub fn derivative_real(f: &RealField, order: u8) -> Result<RealField> {
    Ok(RealField { grid: f.grid, values: diff(&f.values, f.grid.h, order)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub b: f64,
    pub beta: f64,
    pub n_dim: usize,
    pub alpha: f64,
}

impl WeightSpec {
    pub fn new(b: f64, beta: f64, n_dim: usize, alpha: f64) -> Result<WeightSpec> {
        if !(b > 0.0) {
            return Err(Error::Input(format!("weight needs b > 0, got {b}")));
        }
        if !(beta > 0.0) {
            return Err(Error::Input(format!("weight needs beta > 0, got {beta}")));
        }
        Ok(WeightSpec { b, beta, n_dim, alpha })
    }

    /// `μ(y) = (1 + αby/(2β))^{N-1}`, zero where the base is not positive.
    #[inline]
    pub fn mu(&self, y: f64) -> f64 {
        let base = 1.0 + self.alpha * self.b * y / (2.0 * self.beta);
        if base <= 0.0 {
            0.0
        } else {
            base.powi(self.n_dim as i32 - 1)
        }
    }
}

pub fn h1mu_norm(f: &ComplexField, w: &WeightSpec) -> Result<f64> {
    if !(w.b > 0.0) {
        return Err(Error::Input(format!("weight needs b > 0, got {}", w.b)));
    }
    let fp = derivative(f, 1)?;
    let sw = simpson_weights(&f.grid);
    let s: f64 = (0..f.grid.n).map(|i| (fp.values[i].norm_sqr() + f.values[i].norm_sqr()) * w.mu(f.grid.node(i)) * sw[i]).sum();
    Ok(s.max(0.0).sqrt())
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Clone, Debug)]
pub struct BandedMatrix<T> {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> BandedMatrix<T> {
        BandedMatrix { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> BandedMatrix<T> {
        let mut m = BandedMatrix::zeros(n, 0, 0);
        for i in 0..n {
            m.set(i, i, T::from_f64(1.0));
        }
        m
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[i * (self.kl + self.ku + 1) + j + self.kl - i]
        } else {
            T::zero()
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i},{j}) outside band");
        let w = self.kl + self.ku + 1;
        self.data[i * w + j + self.kl - i] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j])
            })
            .collect()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> BandedMatrix<U> {
        BandedMatrix { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn factor(&self) -> Result<BandedLu<T>> {
        BandedLu::new(self)
    }
}

/// LU factors of a band matrix with partial pivoting (upper band widened to `kl + ku`).
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    width: usize,
    data: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    fn new(a: &BandedMatrix<T>) -> Result<BandedLu<T>> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let uw = kl + ku;
        let width = kl + uw + 1;
        let mut data = vec![T::zero(); n * width];
        let idx = |i: usize, j: usize| i * width + j + kl - i;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = a.get(i, j);
                scale = scale.max(v.magnitude());
                data[idx(i, j)] = v;
            }
        }
        if scale == 0.0 {
            return Err(Error::Singular { row: 0, pivot: 0.0, ratio: 0.0 });
        }
        let mut piv = vec![0; n];
        let mut min_piv = f64::INFINITY;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].magnitude();
            for i in k + 1..=last {
                let m = data[idx(i, k)].magnitude();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            piv[k] = p;
            min_piv = min_piv.min(best);
            if !(best > 1e-300 && best > scale * 1e-17 * f64::EPSILON) {
                return Err(Error::Singular { row: k, pivot: best, ratio: best / scale });
            }
            let jmax = (k + uw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let d = data[idx(k, k)];
            for i in k + 1..=last {
                let l = data[idx(i, k)] / d;
                data[idx(i, k)] = l;
                if l.magnitude() != 0.0 {
                    for j in k + 1..=jmax {
                        let u = data[idx(k, j)];
                        data[idx(i, j)] = data[idx(i, j)] - l * u;
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, width, data, piv })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let uw = width - kl - 1;
        let idx = |i: usize, j: usize| i * width + j + kl - i;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] = x[i] - self.data[idx(i, k)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + uw).min(n - 1) {
                s = s - self.data[idx(i, j)] * x[j];
            }
            x[i] = s / self.data[idx(i, i)];
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct BandedSolution<T> {
    pub x: Vec<T>,
    /// `‖Ax − rhs‖∞ / ‖rhs‖∞`
    pub residual: f64,
}

pub fn solve_banded<T: Scalar>(a: &BandedMatrix<T>, rhs: &[T]) -> Result<BandedSolution<T>> {
    if rhs.len() != a.n {
        return Err(Error::Input(format!("rhs length {} for matrix of order {}", rhs.len(), a.n)));
    }
    if a.kl + a.ku + 1 > 5 {
        return Err(Error::Input(format!("bandwidth {} exceeds 5", a.kl + a.ku + 1)));
    }
    let x = a.factor()?.solve(rhs);
    let ax = a.matvec(&x);
    let rn = rhs.iter().fold(0.0f64, |m, v| m.max(v.magnitude()));
    let dn = ax.iter().zip(rhs).fold(0.0f64, |m, (u, v)| m.max((*u - *v).magnitude()));
    let residual = if rn > 0.0 { dn / rn } else { dn };
    Ok(BandedSolution { x, residual })
}
