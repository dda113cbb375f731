//! Isotropic Fourier-space kernels in the `(2πħ)`-convention
//! `f̃(k) = (2πħ)^{-3/2} ∫ d³x f(x) e^{-ik·x/ħ}`.

mod eta;
mod hermite;

pub use eta::{eta_closed_form, eta_integrand, eta_radial, eta_tensor, Insertion};
pub use hermite::{hermite_inverse_gaussian, HermiteConvention, HermiteInverse};

use crate::error::{Error, Result};
use crate::prelude::*;
use crate::quadrature::{integrate, integrate_oscillatory_tail, integrate_panels, Tolerance};
use core::f64::consts::PI;

/// `c · k^power · exp(−rate k²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub power: f64,
    pub rate: f64,
}

impl Monomial {
    pub const fn new(coeff: f64, power: f64, rate: f64) -> Self {
        Self { coeff, power, rate }
    }

    pub fn eval(&self, k: f64) -> f64 {
        let e = if self.rate == 0.0 { 1.0 } else { libm::exp(-self.rate * k * k) };
        self.coeff * libm::pow(k, self.power) * e
    }
}

/// Closed algebra of radial profiles built from monomials.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Sum(Vec<Monomial>),
    Product(Vec<Profile>),
    Reciprocal { numerator: f64, inner: Box<Profile> },
    Add(Vec<Profile>),
}

impl Profile {
    pub fn monomial(coeff: f64, power: f64, rate: f64) -> Self {
        Profile::Sum(vec![Monomial::new(coeff, power, rate)])
    }

    pub fn eval(&self, k: f64) -> f64 {
        match self {
            Profile::Sum(ms) => ms.iter().map(|m| m.eval(k)).sum(),
            Profile::Product(ps) => ps.iter().map(|p| p.eval(k)).product(),
            Profile::Reciprocal { numerator, inner } => numerator / inner.eval(k),
            Profile::Add(ps) => ps.iter().map(|p| p.eval(k)).sum(),
        }
    }

    /// Product, folded into a single monomial when both sides are monomials.
    pub fn times(&self, other: &Profile) -> Profile {
        match (self.as_monomial(), other.as_monomial()) {
            (Some(a), Some(b)) => Profile::monomial(a.coeff * b.coeff, a.power + b.power, a.rate + b.rate),
            _ => Profile::Product(vec![self.clone(), other.clone()]),
        }
    }

    /// `numerator / self`.
    pub fn reciprocal(&self, numerator: f64) -> Profile {
        match self {
            Profile::Reciprocal { numerator: n, inner } => inner.scaled(numerator / n),
            _ => match self.as_monomial() {
                Some(m) => Profile::monomial(numerator / m.coeff, -m.power, -m.rate),
                None => Profile::Reciprocal { numerator, inner: Box::new(self.clone()) },
            },
        }
    }

    pub fn scaled(&self, s: f64) -> Profile {
        match self {
            Profile::Sum(ms) => Profile::Sum(ms.iter().map(|m| Monomial::new(m.coeff * s, m.power, m.rate)).collect()),
            _ => self.times(&Profile::monomial(s, 0.0, 0.0)),
        }
    }

    pub fn plus(&self, other: &Profile) -> Profile {
        match (self, other) {
            (Profile::Sum(a), Profile::Sum(b)) => Profile::Sum(a.iter().chain(b).copied().collect()),
            _ => Profile::Add(vec![self.clone(), other.clone()]),
        }
    }

    fn as_monomial(&self) -> Option<Monomial> {
        match self {
            Profile::Sum(ms) if ms.len() == 1 => Some(ms[0]),
            _ => None,
        }
    }

    /// Leading small-k exponent and large-k tail of the profile.
    pub fn asymptotics(&self) -> Asymptotics {
        match self {
            Profile::Sum(ms) => ms
                .iter()
                .filter(|m| m.coeff != 0.0)
                .map(|m| Asymptotics { small_k_exponent: m.power, tail: Tail { power: m.power, rate: m.rate } })
                .reduce(Asymptotics::sum)
                .unwrap_or(Asymptotics::ZERO),
            Profile::Add(ps) => ps.iter().map(|p| p.asymptotics()).reduce(Asymptotics::sum).unwrap_or(Asymptotics::ZERO),
            Profile::Product(ps) => ps.iter().map(|p| p.asymptotics()).fold(Asymptotics::ONE, Asymptotics::product),
            Profile::Reciprocal { inner, .. } => inner.asymptotics().reciprocal(),
        }
    }
}

/// Large-k behaviour `∝ k^power e^{−rate k²}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tail {
    pub power: f64,
    pub rate: f64,
}

impl Tail {
    /// Whether `self` dominates `other` as k → ∞.
    fn dominates(&self, other: &Tail) -> bool {
        self.rate < other.rate || (self.rate == other.rate && self.power >= other.power)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Asymptotics {
    /// `s` in `f ~ k^s` as k → 0.
    pub small_k_exponent: f64,
    pub tail: Tail,
}

impl Asymptotics {
    const ZERO: Self = Self { small_k_exponent: f64::INFINITY, tail: Tail { power: f64::NEG_INFINITY, rate: f64::INFINITY } };
    const ONE: Self = Self { small_k_exponent: 0.0, tail: Tail { power: 0.0, rate: 0.0 } };

    fn sum(a: Self, b: Self) -> Self {
        Self {
            small_k_exponent: a.small_k_exponent.min(b.small_k_exponent),
            tail: if a.tail.dominates(&b.tail) { a.tail } else { b.tail },
        }
    }

    fn product(a: Self, b: Self) -> Self {
        Self {
            small_k_exponent: a.small_k_exponent + b.small_k_exponent,
            tail: Tail { power: a.tail.power + b.tail.power, rate: a.tail.rate + b.tail.rate },
        }
    }

    fn reciprocal(self) -> Self {
        Self { small_k_exponent: -self.small_k_exponent, tail: Tail { power: -self.tail.power, rate: -self.tail.rate } }
    }

    /// Multiplies by `k^p`.
    pub fn shifted(self, p: f64) -> Self {
        Self { small_k_exponent: self.small_k_exponent + p, tail: Tail { power: self.tail.power + p, rate: self.tail.rate } }
    }
}

/// An isotropic Fourier-space kernel `γ̃(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialKernel {
    profile: Profile,
    hbar: f64,
    label: String,
}

fn norm3(hbar: f64) -> f64 {
    libm::pow(2.0 * PI * hbar, -1.5)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

impl RadialKernel {
    pub fn new(profile: Profile, hbar: f64, label: impl Into<String>) -> Result<Self> {
        check_positive("hbar", hbar)?;
        Ok(Self { profile, hbar, label: label.into() })
    }

    pub fn eval(&self, k: f64) -> f64 {
        self.profile.eval(k)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn asymptotics(&self) -> Asymptotics {
        self.profile.asymptotics()
    }

    pub fn times(&self, other: &RadialKernel, label: impl Into<String>) -> RadialKernel {
        RadialKernel { profile: self.profile.times(&other.profile), hbar: self.hbar, label: label.into() }
    }

    /// Cross-checks the declared asymptotics against local log-log slopes.
    ///
    /// The small-k slope is sampled deep in the infrared; the tail slope is
    /// compared with `power − 2·rate·k²` where the profile is still
    /// representable.
    pub fn check_asymptotics(&self) -> Result<()> {
        let a = self.asymptotics();
        let scale = self.k_scale();
        let slope = |k: f64| {
            let h = 1.01f64;
            let (lo, hi) = (self.eval(k / h).abs(), self.eval(k * h).abs());
            (libm::log(hi) - libm::log(lo)) / (2.0 * libm::log(h))
        };
        if a.small_k_exponent.is_finite() {
            let k = 1e-7 * scale;
            let s = slope(k);
            if s.is_finite() && (s - a.small_k_exponent).abs() > 0.1 {
                return Err(Error::AsymptoticMismatch(format!(
                    "{}: small-k slope {s:.3} vs declared {}",
                    self.label, a.small_k_exponent
                )));
            }
        }
        if a.tail.power.is_finite() {
            // walk outward while the profile stays a normal float, so that
            // subleading terms have decayed as far as possible
            let candidates: Vec<f64> = if a.tail.rate.abs() > 0.0 {
                [20.0, 40.0, 80.0, 160.0, 320.0, 640.0].iter().map(|x| libm::sqrt(x / a.tail.rate.abs())).collect()
            } else {
                [1e3, 1e5, 1e7, 1e9].iter().map(|x| x * scale).collect()
            };
            let representable = |k: f64| {
                let (lo, hi) = (self.eval(k / 1.01).abs(), self.eval(k * 1.01).abs());
                lo.is_normal() && hi.is_normal() && lo > 1e-280 && hi > 1e-280
            };
            let k = candidates.iter().copied().take_while(|&k| representable(k)).last().unwrap_or(candidates[0]);
            let s = slope(k);
            let expected = a.tail.power - 2.0 * a.tail.rate * k * k;
            // the Gaussian part of the slope is large; compare its power part
            if s.is_finite() && (s - expected).abs() > 0.1 + 1e-4 * (expected - a.tail.power).abs() {
                return Err(Error::AsymptoticMismatch(format!(
                    "{}: large-k slope {s:.3} vs declared {expected:.3}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// Characteristic wavenumber, from the fastest Gaussian envelope or ħ.
    fn k_scale(&self) -> f64 {
        let r = self.asymptotics().tail.rate.abs();
        if r > 0.0 {
            1.0 / libm::sqrt(r)
        } else {
            self.hbar.max(1.0)
        }
    }
}

/// `γ = A δ(x − y)`: `γ̃ = A/(2πħ)^{3/2}`.
pub fn delta_kernel(amplitude: f64, hbar: f64) -> Result<RadialKernel> {
    check_positive("amplitude", amplitude)?;
    RadialKernel::new(Profile::monomial(amplitude * norm3(hbar), 0.0, 0.0), hbar, format!("delta(A={amplitude})"))
}

/// Normalized Gaussian correlator of width σ: `γ̃ = (2πħ)^{-3/2} e^{−σ²k²/2ħ²}`.
pub fn gaussian_kernel(sigma: f64, hbar: f64) -> Result<RadialKernel> {
    check_positive("sigma", sigma)?;
    check_positive("hbar", hbar)?;
    RadialKernel::new(
        Profile::monomial(norm3(hbar), 0.0, sigma * sigma / (2.0 * hbar * hbar)),
        hbar,
        format!("gauss(sigma={sigma})"),
    )
}

/// Diósi–Penrose correlator `γ = −2ħ𝒱`: `γ̃ = G (2πħ)^{3/2} / (π² k²)`.
pub fn dp_kernel(hbar: f64, g: f64) -> Result<RadialKernel> {
    check_positive("G", g)?;
    RadialKernel::new(Profile::monomial(g * libm::pow(2.0 * PI * hbar, 1.5) / (PI * PI), -2.0, 0.0), hbar, "dp")
}

/// Newtonian potential `𝒱 = −G/r`: `𝒱̃ = −4πħ²G (2πħ)^{-3/2} / k²`.
pub fn newtonian_kernel(hbar: f64, g: f64) -> Result<RadialKernel> {
    check_positive("G", g)?;
    RadialKernel::new(Profile::monomial(-4.0 * PI * hbar * hbar * g * norm3(hbar), -2.0, 0.0), hbar, "newton")
}

/// `γ̃⁻¹ = (2πħ)^{-3} / γ̃`.
///
/// Profiles of constant sign are accepted (the Newtonian potential is
/// negative everywhere); a profile that vanishes or changes sign is not.
pub fn invert_kernel(k: &RadialKernel) -> Result<RadialKernel> {
    let scale = k.k_scale();
    let mut sign = 0.0;
    for i in 0..=240 {
        let kk = scale * libm::pow(10.0, -6.0 + i as f64 * 0.05);
        let v = k.eval(kk);
        if v == 0.0 || !v.is_finite() {
            let rate = k.asymptotics().tail.rate;
            if v == 0.0 && rate > 0.0 && rate * kk * kk > 500.0 {
                // Gaussian underflow rather than a zero
                break;
            }
            if v == 0.0 {
                return Err(Error::ZeroCrossing(kk));
            }
            continue;
        }
        let s = v.signum();
        if sign != 0.0 && s != sign {
            return Err(Error::ZeroCrossing(kk));
        }
        sign = s;
    }
    let num = libm::pow(2.0 * PI * k.hbar, -3.0);
    let label = match k.label.strip_prefix("inverse(").and_then(|s| s.strip_suffix(')')) {
        Some(inner) => inner.to_string(),
        None => format!("inverse({})", k.label),
    };
    Ok(RadialKernel { profile: k.profile.reciprocal(num), hbar: k.hbar, label })
}

/// Short-distance regulator `g̃(k)` applied as `γ → g∘γ∘g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmearingProfile {
    /// `g̃ = k^β e^{−αk²}`, α > 0, β ≥ 1.
    PowerGaussian { alpha: f64, beta: f64 },
    /// Normalized Gaussian of width σ: `g̃ = (2πħ)^{-3/2} e^{−σ²k²/2ħ²}`.
    Gaussian { sigma: f64, hbar: f64 },
    /// Point particles: `g = δ`, `g̃ = (2πħ)^{-3/2}`.
    None { hbar: f64 },
}

impl SmearingProfile {
    pub fn power_gaussian(alpha: f64, beta: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        if !(beta >= 1.0) {
            return Err(Error::InvalidParameter(format!("smearing exponent beta must be >= 1, got {beta}")));
        }
        Ok(SmearingProfile::PowerGaussian { alpha, beta })
    }

    pub fn gaussian(sigma: f64, hbar: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_positive("hbar", hbar)?;
        Ok(SmearingProfile::Gaussian { sigma, hbar })
    }

    pub fn none(hbar: f64) -> Result<Self> {
        check_positive("hbar", hbar)?;
        Ok(SmearingProfile::None { hbar })
    }

    pub fn profile(&self) -> Profile {
        match *self {
            SmearingProfile::PowerGaussian { alpha, beta } => Profile::monomial(1.0, beta, alpha),
            SmearingProfile::Gaussian { sigma, hbar } => Profile::monomial(norm3(hbar), 0.0, sigma * sigma / (2.0 * hbar * hbar)),
            SmearingProfile::None { hbar } => Profile::monomial(norm3(hbar), 0.0, 0.0),
        }
    }

    /// `g̃²`.
    pub fn squared(&self) -> Profile {
        let p = self.profile();
        p.times(&p)
    }

    pub fn eval(&self, k: f64) -> f64 {
        self.profile().eval(k)
    }

    pub fn label(&self) -> String {
        match *self {
            SmearingProfile::PowerGaussian { alpha, beta } => format!("k^{beta} exp(-{alpha} k^2)"),
            SmearingProfile::Gaussian { sigma, .. } => format!("gauss(sigma={sigma})"),
            SmearingProfile::None { .. } => "none".into(),
        }
    }
}

/// Measurement and feedback parts of the decoherence kernel and their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceProfile {
    pub measurement: RadialKernel,
    pub feedback: RadialKernel,
    pub total: RadialKernel,
}

/// `D̃(k) = (2πħ)³ g̃² [γ̃/8ħ² + (ħG²/π)/(k⁴ γ̃)]`.
///
/// Without smearing the `(2πħ)³ g̃²` factor is one.
pub fn decoherence_profile(
    gamma: &RadialKernel,
    g: f64,
    smearing: Option<&SmearingProfile>,
) -> Result<DecoherenceProfile> {
    let hbar = gamma.hbar;
    check_positive("G", g)?;
    let weight = match smearing {
        Some(s) => s.squared().scaled(libm::pow(2.0 * PI * hbar, 3.0)),
        None => Profile::monomial(1.0, 0.0, 0.0),
    };
    let meas = weight.times(&gamma.profile.scaled(1.0 / (8.0 * hbar * hbar)));
    let inv = gamma.profile.times(&Profile::monomial(1.0, 4.0, 0.0)).reciprocal(hbar * g * g / PI);
    let fb = weight.times(&inv);
    let suffix = smearing.map(|s| format!(", {}", s.label())).unwrap_or_default();
    let measurement = RadialKernel::new(meas.clone(), hbar, format!("measurement[{}{suffix}]", gamma.label))?;
    let feedback = RadialKernel::new(fb.clone(), hbar, format!("feedback[{}{suffix}]", gamma.label))?;
    let total = RadialKernel::new(meas.plus(&fb), hbar, format!("D[{}{suffix}]", gamma.label))?;
    Ok(DecoherenceProfile { measurement, feedback, total })
}

/// Convergence of a radial integral `∫₀^∞ f(k) dk`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    Converges,
    DivergesAtZero,
    DivergesAtInfinity,
    Both,
}

impl Convergence {
    pub fn converges(self) -> bool {
        self == Convergence::Converges
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Convergence::Converges => "converges",
            Convergence::DivergesAtZero => "diverges_at_zero",
            Convergence::DivergesAtInfinity => "diverges_at_infinity",
            Convergence::Both => "both",
        }
    }
}

impl core::fmt::Display for Convergence {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn verdict(a: Asymptotics) -> Convergence {
    let zero_ok = a.small_k_exponent > -1.0;
    let inf_ok = a.tail.rate > 0.0 || (a.tail.rate == 0.0 && a.tail.power < -1.0);
    match (zero_ok, inf_ok) {
        (true, true) => Convergence::Converges,
        (false, true) => Convergence::DivergesAtZero,
        (true, false) => Convergence::DivergesAtInfinity,
        (false, false) => Convergence::Both,
    }
}

/// Classifies `∫ dk f(k)` for a raw radial integrand.
pub fn classify_integrand(integrand: &RadialKernel) -> Result<Convergence> {
    integrand.check_asymptotics()?;
    Ok(verdict(integrand.asymptotics()))
}

/// Classifies `∫ d³k D̃(k)`, i.e. the radial integrand `k² D̃(k)`.
pub fn divergence_classify(d: &RadialKernel) -> Result<Convergence> {
    let measure = d.times(
        &RadialKernel { profile: Profile::monomial(1.0, 2.0, 0.0), hbar: d.hbar, label: String::new() },
        format!("k^2 {}", d.label),
    );
    classify_integrand(&measure)
}

/// Upper integration limit where the Gaussian envelope `k^p e^{−rate k²}`
/// has fallen below 1e−16 of its peak.
pub(crate) fn envelope_cutoff(tail: Tail) -> f64 {
    let r = tail.rate;
    let p = tail.power.max(0.0);
    let peak = if p > 0.0 { libm::sqrt(p / (2.0 * r)) } else { 0.0 };
    let log_peak = if p > 0.0 { p * libm::log(peak) - r * peak * peak } else { 0.0 };
    let target = log_peak - 37.0;
    let mut k = peak.max(1.0 / libm::sqrt(r));
    while p * libm::log(k) - r * k * k > target {
        k *= 1.1;
    }
    k
}

/// `∫₀^∞ f(k) sinc(k r/ħ) dk` for an integrand with declared asymptotics.
pub(crate) fn radial_sinc_integral<F: Fn(f64) -> f64>(
    f: &F,
    asym: Asymptotics,
    r: f64,
    hbar: f64,
    tol: Tolerance,
) -> Result<f64> {
    let q = r / hbar;
    let sinc = |k: f64| {
        let u = k * q;
        if u.abs() < 1e-4 {
            1.0 - u * u / 6.0
        } else {
            libm::sin(u) / u
        }
    };
    let g = |k: f64| f(k) * sinc(k);
    if asym.tail.rate > 0.0 {
        let kmax = envelope_cutoff(asym.tail);
        let mut breaks = vec![0.0];
        if q > 0.0 {
            let step = PI / q;
            let mut z = step;
            while z < kmax && breaks.len() < 5000 {
                breaks.push(z);
                z += step;
            }
        }
        // resolve the envelope peak region even when the sinc is slow
        let scale = 1.0 / libm::sqrt(asym.tail.rate);
        for frac in [0.125, 0.25, 0.5, 1.0, 2.0] {
            breaks.push(frac * scale);
        }
        breaks.push(kmax);
        breaks.retain(|&b| b <= kmax);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        return Ok(integrate_panels(&g, &breaks, tol, 200_000)?.value);
    }
    if asym.tail.rate < 0.0 {
        return Err(Error::Divergent("integrand grows like a Gaussian at large k".into()));
    }
    let p = asym.tail.power;
    if q == 0.0 {
        if p >= -1.0 {
            return Err(Error::Divergent(format!("integrand ~ k^{p} at large k")));
        }
        let head = integrate(&g, 0.0, 1.0, tol)?.value;
        // k = 1/t maps [1, ∞) onto (0, 1]
        let tail = integrate(&|t: f64| if t == 0.0 { 0.0 } else { g(1.0 / t) / (t * t) }, 0.0, 1.0, tol)?.value;
        return Ok(head + tail);
    }
    if p - 1.0 >= 0.0 {
        return Err(Error::Divergent(format!("oscillatory integrand ~ k^{} at large k", p - 1.0)));
    }
    let half = PI / q;
    let head = integrate_panels(&g, &[0.0, half], tol, 20_000)?.value;
    let tail = integrate_oscillatory_tail(&g, half, half, tol, 4000)?.value;
    Ok(head + tail)
}

/// Real-space kernel `f(r) = (2πħ)^{-3/2} 4π ∫ k² f̃(k) sinc(kr/ħ) dk`.
pub fn real_space(kernel: &RadialKernel, r: f64) -> Result<f64> {
    let hbar = kernel.hbar;
    let asym = kernel.asymptotics().shifted(2.0);
    if asym.small_k_exponent <= -1.0 {
        return Err(Error::Divergent(format!("{} is not integrable at k = 0", kernel.label)));
    }
    let f = |k: f64| if k == 0.0 { 0.0 } else { k * k * kernel.eval(k) };
    let v = radial_sinc_integral(&f, asym, r, hbar, Tolerance::new(1e-300, 1e-12))?;
    Ok(norm3(hbar) * 4.0 * PI * v)
}
