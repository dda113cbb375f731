use super::{classify_integrand, envelope_cutoff, radial_sinc_integral, Profile, RadialKernel, SmearingProfile};
use crate::error::{Error, Result};
use crate::prelude::*;
use crate::quadrature::{integrate_panels, Tolerance};
use core::f64::consts::PI;

/// Kernel factor inserted into an η integrand.
#[derive(Clone, Debug, PartialEq)]
pub enum Insertion {
    None,
    /// `γ̃(k)`.
    Correlator(RadialKernel),
    /// `1/γ̃(k)`.
    InverseCorrelator(RadialKernel),
}

impl Insertion {
    fn profile(&self) -> Profile {
        match self {
            Insertion::None => Profile::monomial(1.0, 0.0, 0.0),
            Insertion::Correlator(k) => k.profile().clone(),
            Insertion::InverseCorrelator(k) => k.profile().reciprocal(1.0),
        }
    }

    fn describe(&self) -> String {
        match self {
            Insertion::None => String::new(),
            Insertion::Correlator(k) => format!(" x {}", k.label()),
            Insertion::InverseCorrelator(k) => format!(" / {}", k.label()),
        }
    }
}

fn tolerance() -> Tolerance {
    Tolerance::new(1e-300, 1e-12)
}

/// Radial integrand `k^{p} g̃²(k) F(k)` without the angular factor.
fn integrand(power: f64, n: i32, smearing: &SmearingProfile, ins: &Insertion, hbar: f64) -> Result<RadialKernel> {
    let p = Profile::monomial(1.0, power, 0.0).times(&smearing.squared()).times(&ins.profile());
    RadialKernel::new(p, hbar, format!("eta{n}[{}{}]", smearing.label(), ins.describe()))
}

/// Scalar η integrand `k^{2−n} g̃² F`.
pub fn eta_integrand(n: i32, smearing: &SmearingProfile, ins: &Insertion, hbar: f64) -> Result<RadialKernel> {
    integrand(2.0 - n as f64, n, smearing, ins, hbar)
}

fn require_convergent(k: &RadialKernel) -> Result<()> {
    let c = classify_integrand(k)?;
    if c.converges() {
        Ok(())
    } else {
        Err(Error::Divergent(format!("{}: {}", k.label(), c)))
    }
}

/// `η_n(r) = 4π ∫₀^∞ k^{2−n} g̃²(k) F(k) sinc(kr/ħ) dk`.
pub fn eta_radial(n: i32, smearing: &SmearingProfile, ins: &Insertion, r: f64, hbar: f64) -> Result<f64> {
    let k = eta_integrand(n, smearing, ins, hbar)?;
    require_convergent(&k)?;
    let f = |q: f64| if q == 0.0 { 0.0 } else { k.eval(q) };
    Ok(4.0 * PI * radial_sinc_integral(&f, k.asymptotics(), r.abs(), hbar, tolerance())?)
}

/// `j₁(u)/u` and `j₂(u)`, with series near the origin.
fn bessel_pair(u: f64) -> (f64, f64) {
    if u < 0.1 {
        let u2 = u * u;
        let j1u = 1.0 / 3.0 - u2 / 30.0 + u2 * u2 / 840.0 - u2 * u2 * u2 / 45360.0;
        let j2 = u2 / 15.0 - u2 * u2 / 210.0 + u2 * u2 * u2 / 7560.0;
        (j1u, j2)
    } else {
        let (s, c) = (libm::sin(u), libm::cos(u));
        let j1u = (s - u * c) / (u * u * u);
        let j2 = (3.0 / (u * u * u) - 1.0 / u) * s - 3.0 * c / (u * u);
        (j1u, j2)
    }
}

/// `η_{n,lj}(d) = ∫ d³k k_l k_j k^{−n} g̃² F e^{−ik·d/ħ}`, reduced to the two
/// radial integrals multiplying `δ_lj` and `d̂_l d̂_j`.
pub fn eta_tensor(n: i32, smearing: &SmearingProfile, ins: &Insertion, d: [f64; 3], hbar: f64) -> Result<[[f64; 3]; 3]> {
    let k = integrand(4.0 - n as f64, n, smearing, ins, hbar)?;
    require_convergent(&k)?;
    let dist = libm::sqrt(d.iter().map(|x| x * x).sum::<f64>());
    let q = dist / hbar;
    let asym = k.asymptotics();
    let (iso, aniso) = if q == 0.0 {
        let f = |x: f64| if x == 0.0 { 0.0 } else { k.eval(x) / 3.0 };
        (radial_sinc_integral(&f, asym, 0.0, hbar, tolerance())?, 0.0)
    } else if asym.tail.rate > 0.0 {
        let kmax = envelope_cutoff(asym.tail);
        let mut breaks = vec![0.0];
        let step = PI / q;
        let mut z = step;
        while z < kmax && breaks.len() < 5000 {
            breaks.push(z);
            z += step;
        }
        let scale = 1.0 / libm::sqrt(asym.tail.rate);
        breaks.extend([0.25 * scale, 0.5 * scale, scale, 2.0 * scale].iter().filter(|&&b| b < kmax));
        breaks.push(kmax);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let fi = |x: f64| if x == 0.0 { 0.0 } else { k.eval(x) * bessel_pair(x * q).0 };
        let fa = |x: f64| if x == 0.0 { 0.0 } else { k.eval(x) * bessel_pair(x * q).1 };
        (
            integrate_panels(&fi, &breaks, tolerance(), 200_000)?.value,
            integrate_panels(&fa, &breaks, tolerance(), 200_000)?.value,
        )
    } else {
        return Err(Error::Quadrature("tensor quadrature at nonzero separation needs a Gaussian envelope".into()));
    };
    let mut t = [[0.0; 3]; 3];
    for l in 0..3 {
        for j in 0..3 {
            let dd = if dist > 0.0 { d[l] * d[j] / (dist * dist) } else { 0.0 };
            t[l][j] = 4.0 * PI * (if l == j { iso } else { 0.0 } - aniso * dd);
        }
    }
    Ok(t)
}

/// Closed forms of `η_n(z)` for the smearing `g̃ = k² e^{−αk²}`.
pub fn eta_closed_form(n: i32, alpha: f64, z: f64, hbar: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let s = z / hbar;
    let e = libm::exp(-s * s / (8.0 * alpha));
    let p32 = libm::pow(PI, 1.5);
    let a2 = 2.0 * alpha;
    match n {
        0 => Ok(p32 / (16.0 * libm::pow(a2, 5.5)) * (s.powi(4) + 40.0 * alpha * (6.0 * alpha - s * s)) * e),
        2 => Ok(-p32 / (4.0 * libm::pow(a2, 3.5)) * (s * s - 12.0 * alpha) * e),
        4 => Ok(p32 / libm::pow(a2, 1.5) * e),
        _ => Err(Error::InvalidParameter(format!("no closed form for eta_{n}"))),
    }
}
