//! Least-squares line and power-law fits with standard errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Input(format!("linear fit needs matching data of length >= 2, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("degenerate abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, slope_stderr, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub stderr: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub n: usize,
}

impl PowerFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Fits `|y| ≈ A x^e` on the points with `x` inside `window`.
pub fn power_law_fit(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<PowerFit> {
    let (lo, hi) = (window.0.min(window.1), window.0.max(window.1));
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a >= lo && **a <= hi && **a > 0.0 && b.abs() > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.abs().ln()))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::Numerical(format!("only {} usable points in fit window [{lo:e}, {hi:e}]", lx.len())));
    }
    let f = linear_fit(&lx, &ly)?;
    Ok(PowerFit { exponent: f.slope, stderr: f.slope_stderr, prefactor: f.intercept.exp(), window: (lo, hi), n: f.n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-14);
    }

    #[test]
    fn window_and_sign_handling() {
        let x: Vec<f64> = (1..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -3.0 * v.powf(-1.5)).collect();
        let f = power_law_fit(&x, &y, (10.0, 50.0)).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
        assert!(power_law_fit(&x, &y, (200.0, 300.0)).is_err());
    }

    proptest! {
        #[test]
        fn recovers_exponent(e in -4.0f64..4.0, a in 0.1f64..10.0) {
            let x: Vec<f64> = (0..20).map(|i| 1.5f64.powi(i)).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v.powf(e)).collect();
            let f = power_law_fit(&x, &y, (0.0, f64::INFINITY)).unwrap();
            prop_assert!((f.exponent - e).abs() < 1e-10);
        }
    }
}
