//! Adaptive Dormand–Prince 5(4) integration of real ODE systems.

use crate::error::{Error, Result};
use crate::prelude::*;

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
// Fifth-order weights are the last row of A; these are the embedded fourth-order ones.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-13 }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`, returning `y(t1)`.
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, tol: OdeTolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 == t0 {
        return Ok(y);
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut h = span * 1e-3;
    let mut t = t0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t, &y, &mut k[0]);
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::InvalidParameter("ODE step budget exhausted".into()));
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += dir * h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            f(t + dir * C[s] * h, &stage, &mut k[s]);
        }
        // Stage 7 was evaluated at the fifth-order solution.
        y5.copy_from_slice(&stage);
        let mut err = 0.0f64;
        for i in 0..n {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += (A[6].get(s).copied().unwrap_or(0.0) - B4[s]) * ks[i];
            }
            let scale = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * e / scale).abs());
        }
        if !err.is_finite() {
            return Err(Error::InvalidParameter("ODE right-hand side produced non-finite values".into()));
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + dir * h };
            y.copy_from_slice(&y5);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < span * 1e-14 {
            return Err(Error::InvalidParameter("ODE step size underflow".into()));
        }
    }
    Ok(y)
}
