//! Builders turning physical parameters into protocols and coefficient tables.

mod coefficients;
mod td;

pub use coefficients::LinearCoefficients;
pub use td::{linearized_td, td_preflight, TdModel};

use crate::error::{Error, Result};
use crate::hilbert::{free_hamiltonian, number_op, position_op, HilbertSpec, Mode, Operator};
use crate::prelude::*;
use crate::stochastic::{Channel, FeedbackChannel, MeasurementChannel, ProtocolSpec};

/// CODATA 2018 gravitational constant (m³ kg⁻¹ s⁻²).
pub const G_SI: f64 = 6.674_30e-11;
/// Reduced Planck constant (J s).
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Masses, equilibrium positions and traps of N particles.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
    pub trap_frequencies: Vec<f64>,
    pub g: f64,
    pub hbar: f64,
}

impl ModelParams {
    pub fn new(masses: Vec<f64>, positions: Vec<[f64; 3]>, trap_frequencies: Vec<f64>, g: f64, hbar: f64) -> Result<Self> {
        let n = masses.len();
        if positions.len() != n || trap_frequencies.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: positions.len().min(trap_frequencies.len()) });
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::InvalidParameter(format!("masses must be positive, got {m}")));
        }
        if let Some(w) = trap_frequencies.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("trap frequencies must be non-negative, got {w}")));
        }
        if !(g >= 0.0) || !(hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("need G >= 0 and hbar > 0, got G = {g}, hbar = {hbar}")));
        }
        for a in 0..n {
            for b in a + 1..n {
                if separation(positions[a], positions[b]) == 0.0 {
                    return Err(Error::CoincidentPositions(a, b));
                }
            }
        }
        Ok(Self { masses, positions, trap_frequencies, g, hbar })
    }

    /// Particles on the z-axis.
    pub fn collinear(masses: Vec<f64>, z: &[f64], trap_frequencies: Vec<f64>, g: f64, hbar: f64) -> Result<Self> {
        Self::new(masses, z.iter().map(|&z| [0.0, 0.0, z]).collect(), trap_frequencies, g, hbar)
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    /// `x⁰_α − x⁰_β`.
    pub fn displacement(&self, a: usize, b: usize) -> [f64; 3] {
        let (p, q) = (self.positions[a], self.positions[b]);
        [p[0] - q[0], p[1] - q[1], p[2] - q[2]]
    }

    /// Rescales to units with ħ = 1, `m₀ = 1` and `Ω₀ = 1`.
    pub fn nondimensionalize(&self) -> Result<(ModelParams, Units)> {
        let m = self.masses[0];
        let w = self.trap_frequencies[0];
        if !(w > 0.0) {
            return Err(Error::InvalidParameter("the first particle needs a trap to set the time scale".into()));
        }
        let units = Units { mass: m, length: libm::sqrt(self.hbar / (m * w)), time: 1.0 / w };
        let p = ModelParams {
            masses: self.masses.iter().map(|x| x / units.mass).collect(),
            positions: self.positions.iter().map(|p| p.map(|x| x / units.length)).collect(),
            trap_frequencies: self.trap_frequencies.iter().map(|x| x * units.time).collect(),
            g: self.g * units.mass * units.time * units.time / libm::pow(units.length, 3.0),
            hbar: 1.0,
        };
        Ok((p, units))
    }
}

/// Mass, length and time scales of a dimensionless protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Units {
    pub mass: f64,
    pub length: f64,
    pub time: f64,
}

impl Units {
    pub fn label(&self) -> String {
        format!("units(m={:e} kg, l={:e} m, t={:e} s)", self.mass, self.length, self.time)
    }
}

fn separation(a: [f64; 3], b: [f64; 3]) -> f64 {
    libm::sqrt((0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum())
}

/// `K = 2 G m₁ m₂ / d³`.
pub fn coupling_k(m1: f64, m2: f64, d: f64, g: f64) -> Result<f64> {
    if !(m1 > 0.0 && m2 > 0.0 && d > 0.0 && g > 0.0) {
        return Err(Error::InvalidParameter(format!("coupling needs positive inputs, got m1={m1}, m2={m2}, d={d}, G={g}")));
    }
    Ok(2.0 * g * m1 * m2 / (d * d * d))
}

/// Bilinear couplings `K_{αβlj} = G m_α m_β [3 d_l d_j/|d|⁵ − δ_lj/|d|³]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTensor {
    n: usize,
    blocks: Vec<[[f64; 3]; 3]>,
}

impl CouplingTensor {
    pub fn n_particles(&self) -> usize {
        self.n
    }

    /// Block `K_{αβ··}`; zero on the diagonal.
    pub fn block(&self, a: usize, b: usize) -> &[[f64; 3]; 3] {
        &self.blocks[a * self.n + b]
    }

    pub fn get(&self, a: usize, b: usize, l: usize, j: usize) -> f64 {
        self.block(a, b)[l][j]
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn coupling_tensor(params: &ModelParams) -> CouplingTensor {
    let n = params.n_particles();
    let mut blocks = vec![[[0.0; 3]; 3]; n * n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let d = params.displacement(a, b);
            let r = separation(params.positions[a], params.positions[b]);
            let c = params.g * params.masses[a] * params.masses[b];
            let r3 = r * r * r;
            let r5 = r3 * r * r;
            for l in 0..3 {
                for j in 0..3 {
                    let delta = if l == j { 1.0 } else { 0.0 };
                    blocks[a * n + b][l][j] = c * (3.0 * d[l] * d[j] / r5 - delta / r3);
                }
            }
        }
    }
    CouplingTensor { n, blocks }
}

/// Minimizer of `γ/8ħ² + K²/2γ` and the minimized coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMin {
    pub gamma: f64,
    pub coefficient: f64,
    /// Independent numerical minimizer.
    pub numeric_gamma: f64,
}

/// `γ_min = 2ħK`, coefficient `K/2ħ`, cross-checked numerically.
///
/// The numerical search brackets the minimum on a logarithmic grid and then
/// bisects on the sign of the derivative; a value-only search cannot resolve
/// a smooth minimum beyond √ε relative.
pub fn minimize_gamma(k: f64, hbar: f64) -> Result<GammaMin> {
    if !(k > 0.0) || !(hbar > 0.0) {
        return Err(Error::InvalidParameter(format!("minimize_gamma needs K > 0 and hbar > 0, got K = {k}")));
    }
    let f = |g: f64| g / (8.0 * hbar * hbar) + k * k / (2.0 * g);
    let df = |g: f64| 1.0 / (8.0 * hbar * hbar) - k * k / (2.0 * g * g);
    // coarse bracket: scan decades of log γ
    let (mut best, mut best_v) = (0.0, f64::INFINITY);
    let center = libm::log10(k * hbar);
    for i in -400..=400 {
        let g = libm::pow(10.0, center + i as f64 * 0.05);
        let v = f(g);
        if v < best_v {
            best = g;
            best_v = v;
        }
    }
    let (mut lo, mut hi) = (best / libm::pow(10.0, 0.05), best * libm::pow(10.0, 0.05));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if df(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(GammaMin { gamma: 2.0 * hbar * k, coefficient: k / (2.0 * hbar), numeric_gamma: 0.5 * (lo + hi) })
}

/// Information-rate choice for a builder.
#[derive(Clone, Debug, PartialEq)]
pub enum Rates {
    /// Per-channel KTM minimum `2ħ|K|` (a heuristic for the universal model).
    Minimal,
    Uniform(f64),
    /// Explicit rates in the builder's channel-index layout.
    Explicit(Vec<f64>),
}

/// Axes kept as dynamical modes (0 = x, 1 = y, 2 = z).
fn check_axes(axes: &[usize]) -> Result<()> {
    if axes.is_empty() || axes.iter().any(|&a| a > 2) {
        return Err(Error::InvalidParameter(format!("axes must be a non-empty subset of 0..3, got {axes:?}")));
    }
    for (i, a) in axes.iter().enumerate() {
        if axes[..i].contains(a) {
            return Err(Error::InvalidParameter(format!("duplicate axis {a}")));
        }
    }
    Ok(())
}

/// Hilbert space of particle-major modes `(α, axis)`.
pub fn mode_space(params: &ModelParams, axes: &[usize], cutoff: usize) -> Result<HilbertSpec> {
    check_axes(axes)?;
    let mut modes = Vec::new();
    for a in 0..params.n_particles() {
        let w = params.trap_frequencies[a];
        if !(w > 0.0) {
            return Err(Error::InvalidParameter(format!("particle {a} needs a trap frequency for a Fock basis")));
        }
        for _ in axes {
            modes.push(Mode::harmonic(params.masses[a], w));
        }
    }
    HilbertSpec::uniform(modes, cutoff, params.hbar)
}

struct Coordinates {
    space: HilbertSpec,
    x: Vec<Operator>,
}

fn coordinates(params: &ModelParams, axes: &[usize], cutoff: usize) -> Result<Coordinates> {
    let space = mode_space(params, axes, cutoff)?;
    let x = (0..space.n_modes()).map(|k| position_op(&space, k)).collect::<Result<Vec<_>>>()?;
    Ok(Coordinates { space, x })
}

fn finish(h0: Operator, channels: Vec<Channel>, space: HilbertSpec, hbar: f64, label: String) -> Result<ProtocolSpec> {
    ProtocolSpec::new(h0, channels, hbar, label)?.with_space(space)
}

fn finish_correlated(h0: Operator, x: &[Operator], gamma: &nalgebra::DMatrix<f64>, space: HilbertSpec, hbar: f64, label: String) -> Result<ProtocolSpec> {
    let zeros: Vec<Operator> = x.iter().map(|o| Operator::zeros(o.dim())).collect();
    ProtocolSpec::correlated(h0, x, &zeros, gamma, hbar, label)?.with_space(space)
}

fn rate_value(rates: &Rates, idx: usize, k: f64, hbar: f64) -> Result<f64> {
    let g = match rates {
        Rates::Minimal => 2.0 * hbar * k.abs(),
        Rates::Uniform(g) => *g,
        Rates::Explicit(v) => *v.get(idx).ok_or(Error::DimensionMismatch { expected: idx + 1, found: v.len() })?,
    };
    if !(g > 0.0) {
        return Err(Error::NonPositiveRate(g));
    }
    Ok(g)
}

/// Two particles coupled along their separation: channels
/// `(x₁, K x₂, γ₁)` and `(x₂, K x₁, γ₂)`.
pub fn ktm_protocol(params: &ModelParams, rates: &Rates, cutoff: usize) -> Result<ProtocolSpec> {
    if params.n_particles() != 2 {
        return Err(Error::InvalidParameter(format!("the KTM protocol needs 2 particles, got {}", params.n_particles())));
    }
    let d = separation(params.positions[0], params.positions[1]);
    let k = coupling_k(params.masses[0], params.masses[1], d, params.g)?;
    let c = coordinates(params, &[2], cutoff)?;
    let mut channels = Vec::new();
    for (a, b) in [(0, 1), (1, 0)] {
        let gamma = rate_value(rates, a, k, params.hbar)?;
        channels.push(Channel::new(
            MeasurementChannel::new(c.x[a].clone(), gamma)?,
            FeedbackChannel::new(c.x[b].scaled(k))?,
        ));
    }
    let h0 = free_hamiltonian(&c.space)?;
    finish(h0, channels, c.space, params.hbar, format!("ktm(K={k:e})"))
}

/// One measurement–feedback channel of a linear protocol: `a = x_i`,
/// `b = Σ_j v_j x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearChannel {
    pub measured: usize,
    pub feedback: Vec<(usize, f64)>,
    pub gamma: f64,
}

/// Channel-level description of a protocol in coordinate indices
/// `i = α·n_axes + axis_slot`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProtocol {
    pub params: ModelParams,
    pub axes: Vec<usize>,
    pub channels: Vec<LinearChannel>,
    pub label: String,
}

impl LinearProtocol {
    pub fn n_coords(&self) -> usize {
        self.params.n_particles() * self.axes.len()
    }

    /// Particle owning coordinate `i`.
    pub fn particle_of(&self, i: usize) -> usize {
        i / self.axes.len()
    }

    pub fn coefficients(&self) -> LinearCoefficients {
        LinearCoefficients::from_channels(self)
    }

    /// Operator-level protocol on a truncated Fock space.
    pub fn build(&self, cutoff: usize) -> Result<ProtocolSpec> {
        let c = coordinates(&self.params, &self.axes, cutoff)?;
        let dim = c.space.dim();
        let mut channels = Vec::with_capacity(self.channels.len());
        for ch in &self.channels {
            let b = ch.feedback.iter().fold(Operator::zeros(dim), |acc, &(j, v)| &acc + &c.x[j].scaled(v));
            channels.push(Channel::new(MeasurementChannel::new(c.x[ch.measured].clone(), ch.gamma)?, FeedbackChannel::new(b)?));
        }
        let h0 = free_hamiltonian(&c.space)?;
        finish(h0, channels, c.space, self.params.hbar, self.label.clone())
    }
}

/// Pairwise protocol: one channel per `(α, β≠α, l, j)` with `a = x_{αl}`,
/// `b = K_{αβlj} x_{βj}`.
///
/// Explicit rates are indexed `[α][β][l][j]` over the kept axes and must be
/// symmetric in `α↔β` and `l↔j`. Channels with `K = 0` carry no feedback
/// and, under [`Rates::Minimal`], are dropped.
pub fn pairwise_protocol(params: &ModelParams, rates: &Rates, axes: &[usize]) -> Result<LinearProtocol> {
    check_axes(axes)?;
    let n = params.n_particles();
    let na = axes.len();
    let kt = coupling_tensor(params);
    let idx = |a: usize, b: usize, l: usize, j: usize| ((a * n + b) * na + l) * na + j;
    if let Rates::Explicit(v) = rates {
        if v.len() != n * n * na * na {
            return Err(Error::DimensionMismatch { expected: n * n * na * na, found: v.len() });
        }
        for a in 0..n {
            for b in 0..n {
                for l in 0..na {
                    for j in 0..na {
                        let g = v[idx(a, b, l, j)];
                        if a != b && (g != v[idx(b, a, l, j)] || g != v[idx(a, b, j, l)]) {
                            return Err(Error::RateSymmetry(format!("gamma[{a}][{b}][{l}][{j}]")));
                        }
                    }
                }
            }
        }
    }
    let mut channels = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            for (l, &al) in axes.iter().enumerate() {
                for (j, &aj) in axes.iter().enumerate() {
                    let k = kt.get(a, b, al, aj);
                    if k == 0.0 && matches!(rates, Rates::Minimal) {
                        continue;
                    }
                    let gamma = rate_value(rates, idx(a, b, l, j), k, params.hbar)?;
                    let feedback = if k == 0.0 { vec![] } else { vec![(b * na + j, k)] };
                    channels.push(LinearChannel { measured: a * na + l, feedback, gamma });
                }
            }
        }
    }
    Ok(LinearProtocol { params: params.clone(), axes: axes.to_vec(), channels, label: "pairwise".into() })
}

/// Universal protocol: one channel per `(α, l)` with `a = x_{αl}` and
/// `b = Σ_{β≠α, j} K_{αβlj} x_{βj}`.
///
/// [`Rates::Minimal`] uses `2ħ‖K_{α·l·}‖`, a KTM-style default rather than
/// a derived optimum. Explicit rates are indexed `[α][l]`.
pub fn universal_protocol(params: &ModelParams, rates: &Rates, axes: &[usize]) -> Result<LinearProtocol> {
    check_axes(axes)?;
    let n = params.n_particles();
    let na = axes.len();
    let kt = coupling_tensor(params);
    if let Rates::Explicit(v) = rates {
        if v.len() != n * na {
            return Err(Error::DimensionMismatch { expected: n * na, found: v.len() });
        }
    }
    let mut channels = Vec::new();
    for a in 0..n {
        for (l, &al) in axes.iter().enumerate() {
            let mut feedback = Vec::new();
            for b in (0..n).filter(|&b| b != a) {
                for (j, &aj) in axes.iter().enumerate() {
                    let k = kt.get(a, b, al, aj);
                    if k != 0.0 {
                        feedback.push((b * na + j, k));
                    }
                }
            }
            let norm = libm::sqrt(feedback.iter().map(|(_, k)| k * k).sum());
            let gamma = rate_value(rates, a * na + l, norm, params.hbar)?;
            channels.push(LinearChannel { measured: a * na + l, feedback, gamma });
        }
    }
    Ok(LinearProtocol { params: params.clone(), axes: axes.to_vec(), channels, label: "universal".into() })
}

/// Lattice of occupation modes with Newtonian-like couplings.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeParams {
    pub mass: f64,
    /// Site coordinates.
    pub sites: Vec<[f64; 3]>,
    /// Minimum length cutoff `a`.
    pub cutoff_length: f64,
    pub g: f64,
    pub hbar: f64,
    /// Drop the `α = β` couplings.
    pub remove_self_interaction: bool,
}

/// `χ_{αβ} = −G m² / [2(|x_α − x_β| + a)]`.
pub fn ktm2_couplings(p: &LatticeParams) -> Result<Vec<Vec<f64>>> {
    if !(p.cutoff_length > 0.0) {
        return Err(Error::InvalidParameter(format!("lattice cutoff a must be positive, got {}", p.cutoff_length)));
    }
    let n = p.sites.len();
    for a in 0..n {
        for b in a + 1..n {
            if separation(p.sites[a], p.sites[b]) == 0.0 {
                return Err(Error::CoincidentPositions(a, b));
            }
        }
    }
    Ok((0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a == b && p.remove_self_interaction {
                        0.0
                    } else {
                        -p.g * p.mass * p.mass / (2.0 * (separation(p.sites[a], p.sites[b]) + p.cutoff_length))
                    }
                })
                .collect()
        })
        .collect())
}

/// KTM2 lattice protocol: `a_α = n̂_α` at rate `2ħm`, `b_α = Σ_β χ_{αβ} n̂_β`.
///
/// The local Hamiltonian is taken to vanish; only the measured number
/// operators and the feedback couplings generate dynamics.
pub fn ktm2_lattice_protocol(p: &LatticeParams, occupation_cutoff: usize) -> Result<ProtocolSpec> {
    if occupation_cutoff < 2 {
        return Err(Error::InvalidParameter(format!("occupation cutoff must be >= 2, got {occupation_cutoff}")));
    }
    if !(p.mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {}", p.mass)));
    }
    let chi = ktm2_couplings(p)?;
    let n = p.sites.len();
    let space = HilbertSpec::uniform(vec![Mode::harmonic(p.mass, 1.0); n], occupation_cutoff, p.hbar)?;
    let num = (0..n).map(|k| number_op(&space, k)).collect::<Result<Vec<_>>>()?;
    let gamma = 2.0 * p.hbar * p.mass;
    let mut channels = Vec::with_capacity(n);
    for a in 0..n {
        let b = (0..n).fold(Operator::zeros(space.dim()), |acc, j| if chi[a][j] == 0.0 { acc } else { &acc + &num[j].scaled(chi[a][j]) });
        channels.push(Channel::new(MeasurementChannel::new(num[a].clone(), gamma)?, FeedbackChannel::new(b)?));
    }
    let label = format!("ktm2(a={:e})", p.cutoff_length);
    finish(Operator::zeros(space.dim()), channels, space, p.hbar, label)
}

/// `Λ = 𝒞 G m M / (ħ R³)`, the coefficient of `−Λ[ẑ,[ẑ,ρ]]`.
pub fn earth_atom_rate(geometry: f64, m_atom: f64, m_earth: f64, r_earth: f64, hbar: f64, g: f64) -> Result<f64> {
    if !(geometry >= 0.0 && m_atom > 0.0 && m_earth > 0.0 && r_earth > 0.0 && hbar > 0.0) {
        return Err(Error::InvalidParameter("earth_atom_rate needs positive masses, radius and hbar".into()));
    }
    Ok(geometry * g * m_atom * m_earth / (hbar * r_earth * r_earth * r_earth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::master::{lindblad_form, rhs};
    use approx::assert_relative_eq;

    fn two(g: f64) -> ModelParams {
        ModelParams::collinear(vec![1.0, 1.0], &[0.0, 1.0], vec![1.0, 1.0], g, 1.0).unwrap()
    }

    #[test]
    fn coupling_examples() {
        assert_relative_eq!(coupling_k(1.0, 1.0, 1.0, G_SI).unwrap(), 1.334_86e-10, max_relative = 1e-5);
        assert_eq!(coupling_k(1.0, 1.0, 1.0, 1.0).unwrap(), 2.0);
        assert_relative_eq!(coupling_k(2.0, 3.0, 2.0, 1.0).unwrap(), coupling_k(2.0, 3.0, 1.0, 1.0).unwrap() / 8.0);
        assert!(coupling_k(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn axial_tensor() {
        let (g, m, d) = (0.7, 1.3, 2.0);
        let p = ModelParams::collinear(vec![m, m], &[0.0, d], vec![1.0, 1.0], g, 1.0).unwrap();
        let t = coupling_tensor(&p);
        let u = g * m * m / (d * d * d);
        assert_relative_eq!(t.get(0, 1, 2, 2), 2.0 * u, max_relative = 1e-14);
        assert_relative_eq!(t.get(0, 1, 0, 0), -u, max_relative = 1e-14);
        assert_relative_eq!(t.get(0, 1, 1, 1), -u, max_relative = 1e-14);
        assert_eq!(t.get(0, 1, 0, 2), 0.0);
        assert_relative_eq!(t.get(0, 1, 2, 2), coupling_k(m, m, d, g).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn coincident_positions_rejected() {
        let e = ModelParams::new(vec![1.0, 1.0], vec![[0.0; 3]; 2], vec![1.0; 2], 1.0, 1.0);
        assert_eq!(e, Err(Error::CoincidentPositions(0, 1)));
    }

    #[test]
    fn gamma_minimum() {
        let r = minimize_gamma(1.0, 1.0).unwrap();
        assert_eq!(r.gamma, 2.0);
        assert_eq!(r.coefficient, 0.5);
        for k in [1e-12, 1e-6, 1.0, 1e3] {
            let r = minimize_gamma(k, 1.0).unwrap();
            assert!((r.numeric_gamma - r.gamma).abs() <= 1e-9 * r.gamma);
            let f = |g: f64| g / 8.0 + k * k / (2.0 * g);
            let mirror = (2.0 * k) * (2.0 * k) / 3.7e-3;
            assert_relative_eq!(f(3.7e-3), f(mirror), max_relative = 1e-12);
        }
        assert!(minimize_gamma(0.0, 1.0).is_err());
    }

    #[test]
    fn ktm_recovers_the_gravitational_hamiltonian() {
        let p = two(0.05);
        let spec = ktm_protocol(&p, &Rates::Minimal, 5).unwrap();
        let lf = lindblad_form(&spec);
        let k = coupling_k(1.0, 1.0, 1.0, 0.05).unwrap();
        let space = spec.space().unwrap();
        let x1 = position_op(space, 0).unwrap();
        let x2 = position_op(space, 1).unwrap();
        let target = x1.compose(&x2).scaled(k);
        assert!((&lf.h_eff - spec.h0()).distance(&target) < 1e-12);
        let c = spec.channels()[0].measurement.gamma();
        assert_relative_eq!(c, 2.0 * k, max_relative = 1e-15);
    }

    #[test]
    fn pairwise_two_particles_is_ktm() {
        let p = two(0.05);
        let ktm = ktm_protocol(&p, &Rates::Uniform(0.3), 4).unwrap();
        let pw = pairwise_protocol(&p, &Rates::Uniform(0.3), &[2]).unwrap().build(4).unwrap();
        let uni = universal_protocol(&p, &Rates::Uniform(0.3), &[2]).unwrap().build(4).unwrap();
        let rho = crate::hilbert::DensityOperator::maximally_mixed(16).into_matrix()
            + nalgebra::DMatrix::from_fn(16, 16, |i, j| linalg::C64::new(0.01 * ((i * 7 + j * 3) % 5) as f64, 0.0));
        let mut rho = rho;
        linalg::symmetrize(&mut rho);
        let r0 = rhs(&rho, &ktm).unwrap();
        assert!(linalg::max_abs(&(rhs(&rho, &pw).unwrap() - &r0)) < 1e-13);
        assert!(linalg::max_abs(&(rhs(&rho, &uni).unwrap() - &r0)) < 1e-13);
    }

    #[test]
    fn pairwise_rate_symmetry_is_enforced() {
        let p = two(1.0);
        let mut v = vec![1.0; 4];
        v[1] = 2.0; // gamma[0][1] != gamma[1][0]
        assert!(matches!(pairwise_protocol(&p, &Rates::Explicit(v), &[2]), Err(Error::RateSymmetry(_))));
    }

    #[test]
    fn ktm2_two_sites() {
        let lp = LatticeParams {
            mass: 1.0,
            sites: vec![[0.0; 3], [0.0, 0.0, 2.0]],
            cutoff_length: 0.5,
            g: 1.0,
            hbar: 1.0,
            remove_self_interaction: true,
        };
        let spec = ktm2_lattice_protocol(&lp, 3).unwrap();
        let chi = -1.0 / (2.0 * 2.5);
        let space = spec.space().unwrap();
        let n1 = number_op(space, 0).unwrap();
        let n2 = number_op(space, 1).unwrap();
        let lf = lindblad_form(&spec);
        assert!(lf.h_eff.distance(&n1.compose(&n2).scaled(chi)) < 1e-14);
        let far = LatticeParams { cutoff_length: 1e12, ..lp.clone() };
        assert!(ktm2_couplings(&far).unwrap()[0][1].abs() < 1e-12);
        assert!(ktm2_couplings(&LatticeParams { cutoff_length: 0.0, ..lp }).is_err());
    }

    #[test]
    fn earth_atom() {
        let l = earth_atom_rate(0.47, 1.4e-25, 6e24, 6e6, HBAR_SI, G_SI).unwrap();
        assert!((l / 1.16e3 - 1.0).abs() < 0.05, "{l}");
        assert_eq!(earth_atom_rate(0.0, 1.4e-25, 6e24, 6e6, HBAR_SI, G_SI).unwrap(), 0.0);
        let l2 = earth_atom_rate(0.47, 2.8e-25, 6e24, 6e6, HBAR_SI, G_SI).unwrap();
        assert_relative_eq!(l2, 2.0 * l, max_relative = 1e-15);
    }

    #[test]
    fn nondimensional_round_trip() {
        let p = ModelParams::collinear(vec![1e-14, 2e-14], &[0.0, 1e-6], vec![1e3, 2e3], G_SI, HBAR_SI).unwrap();
        let (q, u) = p.nondimensionalize().unwrap();
        assert_relative_eq!(q.masses[1], 2.0);
        assert_relative_eq!(q.trap_frequencies[1], 2.0);
        assert_relative_eq!(q.positions[1][2] * u.length, 1e-6, max_relative = 1e-14);
        // K/(mΩ²) is unit-free
        let k_si = coupling_k(1e-14, 2e-14, 1e-6, G_SI).unwrap() / (1e-14 * 1e6);
        let k_dl = coupling_k(1.0, 2.0, q.positions[1][2], q.g).unwrap();
        assert_relative_eq!(k_si, k_dl, max_relative = 1e-12);
    }
}
