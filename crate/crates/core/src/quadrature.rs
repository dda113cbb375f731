//! Adaptive Gauss–Kronrod quadrature and series acceleration.

use crate::error::{Error, Result};
use crate::prelude::*;

// 7-point Gauss / 15-point Kronrod nodes on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// One G7/K15 panel: Kronrod value and |K15 − G7|.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive integration over consecutive panels `breaks[i]..breaks[i+1]`.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    tol: Tolerance,
    max_intervals: usize,
) -> Result<Estimate> {
    let mut panels: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] != w[0])
        .map(|w| {
            let (v, e) = gauss_kronrod(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if error <= tol.target(value) {
            return Ok(Estimate { value, error, intervals: panels.len() });
        }
        if panels.len() >= max_intervals {
            return Err(Error::Quadrature(format!(
                "error {error:.3e} above target {:.3e} after {max_intervals} intervals",
                tol.target(value)
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (a, b, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Err(Error::Quadrature("interval bisection underflow".into()));
        }
        let (v1, e1) = gauss_kronrod(f, a, m);
        let (v2, e2) = gauss_kronrod(f, m, b);
        panels.push((a, m, v1, e1));
        panels.push((m, b, v2, e2));
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_panels(f, &[a, b], tol, 20_000)
}

/// Wynn's epsilon algorithm; returns the accelerated limit of `partial_sums`.
///
/// Among the even columns of the epsilon table the entry whose last two
/// values agree best is returned.
pub fn wynn_epsilon(partial_sums: &[f64]) -> f64 {
    let n = partial_sums.len();
    if n < 3 {
        return partial_sums.last().copied().unwrap_or(0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial_sums.to_vec();
    let mut best = cur[n - 1];
    let mut best_err = (cur[n - 1] - cur[n - 2]).abs();
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let p = if col == 0 { 0.0 } else { prev[i + 1] };
            next.push(if diff == 0.0 { f64::INFINITY } else { p + 1.0 / diff });
        }
        prev = cur;
        cur = next;
        col += 1;
        if cur.iter().any(|v| !v.is_finite()) {
            break;
        }
        if col % 2 == 0 && cur.len() >= 2 {
            let k = cur.len();
            let err = (cur[k - 1] - cur[k - 2]).abs();
            if err < best_err {
                best = cur[k - 1];
                best_err = err;
            }
        }
    }
    best
}

/// `∫_a^∞ f` for an oscillatory integrand with slowly decaying envelope.
///
/// The range is cut into panels of width `period` (aligned with sign changes
/// when the caller supplies them), and the partial sums are accelerated with
/// Wynn's epsilon algorithm until consecutive extrapolations agree.
pub fn integrate_oscillatory_tail<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    period: f64,
    tol: Tolerance,
    max_panels: usize,
) -> Result<Estimate> {
    let panel_tol = Tolerance::new(tol.abs * 0.01, tol.rel * 0.01);
    let mut sums = Vec::new();
    let mut total = 0.0;
    let mut last_limit = f64::NAN;
    let mut agree = 0;
    for k in 0..max_panels {
        let lo = a + k as f64 * period;
        let est = integrate_panels(f, &[lo, lo + period], panel_tol, 2_000)?;
        total += est.value;
        sums.push(total);
        if sums.len() >= 8 {
            let window = &sums[sums.len().saturating_sub(40)..];
            let limit = wynn_epsilon(window);
            if (limit - last_limit).abs() <= tol.target(limit) {
                agree += 1;
                if agree >= 3 {
                    return Ok(Estimate { value: limit, error: (limit - last_limit).abs(), intervals: k + 1 });
                }
            } else {
                agree = 0;
            }
            last_limit = limit;
        }
    }
    Err(Error::Quadrature(format!("oscillatory tail did not settle within {max_panels} panels")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;

    #[test]
    fn kronrod_is_exact_for_high_degree_polynomials() {
        let (v, _) = gauss_kronrod(&|x: f64| x.powi(20), -1.0, 1.0);
        assert_relative_eq!(v, 2.0 / 21.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let est = integrate(&f, -1.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert_relative_eq!(est.value, 2.0 * 100.0 * (100.0f64).atan(), max_relative = 1e-11);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        let mut s = 0.0;
        let sums: Vec<f64> = (0..15)
            .map(|k| {
                s += if k % 2 == 0 { 1.0 } else { -1.0 } / (k as f64 + 1.0);
                s
            })
            .collect();
        assert_relative_eq!(wynn_epsilon(&sums), 2f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn dirichlet_integral_via_tail_acceleration() {
        let f = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
        let est = integrate_oscillatory_tail(&f, 0.0, PI, Tolerance::new(1e-12, 1e-11), 400).unwrap();
        assert_relative_eq!(est.value, PI / 2.0, max_relative = 1e-9);
    }
}
