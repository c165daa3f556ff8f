//! Adaptive Dormand–Prince 5(4) integration with exact landing on requested output nodes.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rtol: 1e-10, atol: 1e-300 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

#[derive(Clone, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `y' = f(x, y)` from `x0` through every node of `nodes` (monotone in the
/// direction of integration), calling `observe` at each node. `observe` may modify the
/// state and returns `false` to stop early.
pub fn dopri45<const D: usize>(
    f: impl FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
    x0: f64,
    y0: [f64; D],
    nodes: &[f64],
    tol: Tolerance,
    observe: impl FnMut(f64, &mut [f64; D]) -> Result<bool>,
) -> Result<OdeStats> {
    dopri45_peak(f, x0, y0, nodes, tol, [false; D], observe)
}

/// As [`dopri45`], but components flagged in `peak` are error-weighted by the largest
/// magnitude they have reached so far instead of their current one.
pub fn dopri45_peak<const D: usize>(
    mut f: impl FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
    x0: f64,
    y0: [f64; D],
    nodes: &[f64],
    tol: Tolerance,
    peak: [bool; D],
    mut observe: impl FnMut(f64, &mut [f64; D]) -> Result<bool>,
) -> Result<OdeStats> {
    let Some(&x_end) = nodes.last() else {
        return Ok(OdeStats::default());
    };
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y)?;
    let mut h = initial_step(&y, &k1, x0, x_end, tol);
    let mut stats = OdeStats::default();
    let mut next = 0;
    let mut top = y.map(f64::abs);
    while next < nodes.len() && (nodes[next] - x0) * dir <= 0.0 {
        let before = y;
        if !observe(nodes[next], &mut y)? {
            return Ok(stats);
        }
        if y != before {
            k1 = f(x, &y)?;
        }
        next += 1;
    }
    while next < nodes.len() {
        let target = nodes[next];
        let mut step = h.min((target - x).abs()) * dir;
        let landing = (x + step - target).abs() <= 1e-14 * target.abs().max(1.0) || h >= (target - x).abs();
        if landing {
            step = target - x;
        }
        let mut k = [[0.0; D]; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for (i, v) in ys.iter_mut().enumerate() {
                for (j, kj) in k.iter().enumerate().take(s) {
                    *v += step * A[s][j] * kj[i];
                }
            }
            k[s] = f(x + C[s] * step, &ys)?;
        }
        let mut yn = y;
        let mut err = 0.0f64;
        for i in 0..D {
            let mut inc = 0.0;
            let mut e = 0.0;
            for s in 0..7 {
                inc += B[s] * k[s][i];
                e += E[s] * k[s][i];
            }
            yn[i] = y[i] + step * inc;
            let mut mag = y[i].abs().max(yn[i].abs());
            if peak[i] {
                mag = mag.max(top[i]);
            }
            let sc = tol.atol + tol.rtol * mag;
            err = err.max((step * e / sc).abs());
        }
        if !err.is_finite() || yn.iter().any(|v| !v.is_finite()) {
            h = step.abs() / 4.0;
            stats.rejected += 1;
        } else if err <= 1.0 {
            x = if landing { target } else { x + step };
            y = yn;
            k1 = k[6];
            for i in 0..D {
                top[i] = top[i].max(y[i].abs());
            }
            stats.accepted += 1;
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if landing { h.max(step.abs() * grow) } else { step.abs() * grow };
            if landing {
                let before = y;
                if !observe(x, &mut y)? {
                    return Ok(stats);
                }
                if y != before {
                    k1 = f(x, &y)?;
                }
                next += 1;
            }
        } else {
            stats.rejected += 1;
            h = step.abs() * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h <= 1e-14 * x.abs().max(1e-300) {
            return Err(Error::NoConvergence(format!("step size underflow at x = {x:e}")));
        }
    }
    Ok(stats)
}

fn initial_step<const D: usize>(y: &[f64; D], f0: &[f64; D], x0: f64, x1: f64, tol: Tolerance) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..D {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d0 = d0.max((y[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    let span = (x1 - x0).abs();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h.min(span).max(1e-12 * span)
}

/// Geometric output nodes from `a` to `b`, `per_decade` per factor of ten, both ends included.
pub fn log_nodes(a: f64, b: f64, per_decade: usize) -> Vec<f64> {
    let decades = (b / a).log10().abs();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let mut v: Vec<f64> = (0..=n).map(|i| a * (b / a).powf(i as f64 / n as f64)).collect();
    v[0] = a;
    v[n] = b;
    v
}
