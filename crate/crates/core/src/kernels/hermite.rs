use crate::error::Result;
use crate::prelude::*;
use crate::quadrature::{integrate_panels, Tolerance};
use core::f64::consts::PI;

/// Coefficient choice for the Hermite series of the inverse Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HermiteConvention {
    /// `c_n = (−1)^{2n} / (2ⁿ n!)`.
    Positive,
    /// `c_n = (−1)^{2n} σ^{2n} / (2ⁿ n!)`.
    PositiveScaled,
    /// `c_n = (−1)ⁿ / (2ⁿ n!)`.
    AlternatingSign,
}

impl HermiteConvention {
    pub const ALL: [HermiteConvention; 3] =
        [HermiteConvention::Positive, HermiteConvention::PositiveScaled, HermiteConvention::AlternatingSign];

    pub fn coefficient(self, n: usize, sigma: f64) -> f64 {
        let base = 1.0 / (libm::pow(2.0, n as f64) * factorial(n));
        match self {
            HermiteConvention::Positive => base,
            HermiteConvention::PositiveScaled => base * libm::pow(sigma, 2.0 * n as f64),
            HermiteConvention::AlternatingSign => if n % 2 == 0 { base } else { -base },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HermiteConvention::Positive => "positive",
            HermiteConvention::PositiveScaled => "positive-scaled",
            HermiteConvention::AlternatingSign => "alternating-sign",
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Physicists' Hermite polynomial `H_n(y)`.
pub(crate) fn hermite(n: usize, y: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * y);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * y * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Truncated Hermite-series inverse of `K(z) = (πσ²)^{-3/2} e^{−z²/σ²}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermiteInverse {
    pub sigma: f64,
    pub order: usize,
    pub convention: HermiteConvention,
}

pub fn hermite_inverse_gaussian(sigma: f64, order: usize, convention: HermiteConvention) -> HermiteInverse {
    HermiteInverse { sigma, order, convention }
}

fn tol() -> Tolerance {
    Tolerance::new(1e-15, 1e-12)
}

impl HermiteInverse {
    /// One Cartesian factor of the forward kernel.
    pub fn kernel_1d(&self, x: f64) -> f64 {
        let s = self.sigma;
        libm::exp(-x * x / (s * s)) / (libm::sqrt(PI) * s)
    }

    /// One Cartesian factor of the truncated inverse.
    pub fn eval_1d(&self, x: f64) -> f64 {
        let y = x / self.sigma;
        let series: f64 = (0..=self.order).map(|n| self.convention.coefficient(n, self.sigma) * hermite(2 * n, y)).sum();
        self.kernel_1d(x) * series
    }

    pub fn eval(&self, z: [f64; 3]) -> f64 {
        z.iter().map(|&x| self.eval_1d(x)).product()
    }

    fn support(&self) -> Vec<f64> {
        let r = self.sigma * (8.0 + libm::sqrt(2.0 * self.order as f64 + 1.0));
        (0..=32).map(|i| -r + 2.0 * r * i as f64 / 32.0).collect()
    }

    /// `|∫ (K ∘ K⁻¹)(x) f(x) dx − f(0)|` on a 1D slice for `f(x) = e^{−x²}`.
    ///
    /// `K ∘ f` is evaluated by quadrature, so this is an independent check of
    /// the series rather than of its Fourier image.
    pub fn convolution_deviation(&self) -> Result<f64> {
        let s = self.sigma;
        let f = |x: f64| libm::exp(-x * x);
        let smear = |r: f64| -> f64 {
            let g = |x: f64| self.kernel_1d(x - r) * f(x);
            let w = 10.0 * s.max(1.0);
            integrate_panels(&g, &[r - w, r - s, r, r + s, r + w], tol(), 10_000).map(|e| e.value).unwrap_or(f64::NAN)
        };
        let h = |r: f64| self.eval_1d(r) * smear(r);
        let v = integrate_panels(&h, &self.support(), tol(), 20_000)?.value;
        Ok((v - f(0.0)).abs())
    }

    /// `∫ K⁻¹_1d(x) cos(kx/ħ) dx`; the exact inverse gives `e^{σ²k²/4ħ²}`.
    pub fn fourier_1d(&self, k: f64, hbar: f64) -> Result<f64> {
        let g = |x: f64| self.eval_1d(x) * libm::cos(k * x / hbar);
        Ok(integrate_panels(&g, &self.support(), tol(), 20_000)?.value)
    }

    /// Transform of the 3D truncation along a Cartesian axis, in the same
    /// convention as [`super::invert_kernel`].
    pub fn fourier_on_axis(&self, k: f64, hbar: f64) -> Result<f64> {
        let zero = self.fourier_1d(0.0, hbar)?;
        Ok(libm::pow(2.0 * PI * hbar, -1.5) * self.fourier_1d(k, hbar)? * zero * zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gaussian_kernel, invert_kernel};
    use approx::assert_relative_eq;

    #[test]
    fn hermite_recurrence() {
        let y = 0.7;
        assert_relative_eq!(hermite(2, y), 4.0 * y * y - 2.0, max_relative = 1e-15);
        assert_relative_eq!(hermite(4, y), 16.0 * y.powi(4) - 48.0 * y * y + 12.0, max_relative = 1e-14);
    }

    #[test]
    fn order_zero_is_the_kernel() {
        for c in HermiteConvention::ALL {
            let h = hermite_inverse_gaussian(0.6, 0, c);
            assert_relative_eq!(h.eval([0.1, -0.2, 0.3]), h.eval_1d(0.1) * h.eval_1d(-0.2) * h.eval_1d(0.3));
            assert_relative_eq!(h.eval_1d(0.4), h.kernel_1d(0.4), max_relative = 1e-15);
        }
    }

    #[test]
    fn alternating_sign_converges_monotonically() {
        let mut last = f64::INFINITY;
        for order in 0..=6 {
            let d = hermite_inverse_gaussian(0.5, order, HermiteConvention::AlternatingSign).convolution_deviation().unwrap();
            assert!(d < last, "order {order}: {d} >= {last}");
            last = d;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn positive_coefficients_do_not_converge() {
        for c in [HermiteConvention::Positive, HermiteConvention::PositiveScaled] {
            let d: Vec<f64> = (0..=6)
                .map(|o| hermite_inverse_gaussian(0.5, o, c).convolution_deviation().unwrap())
                .collect();
            assert!(d[6] > 0.05, "{:?}: {d:?}", c);
        }
    }

    #[test]
    fn transform_approaches_the_inverted_kernel() {
        let (sigma, hbar) = (0.5, 1.0);
        let exact = invert_kernel(&gaussian_kernel(sigma / libm::sqrt(2.0), hbar).unwrap()).unwrap();
        let kmax = 2.0 * hbar / sigma;
        let err = |order: usize| {
            let h = hermite_inverse_gaussian(sigma, order, HermiteConvention::AlternatingSign);
            (0..=10)
                .map(|i| {
                    let k = kmax * i as f64 / 10.0;
                    (h.fourier_on_axis(k, hbar).unwrap() / exact.eval(k.max(1e-300)) - 1.0).abs()
                })
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = (0..=6).map(err).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[6] < 5e-3);
    }
}
