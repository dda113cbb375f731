//! Consistency checks on the coefficient level: center-of-mass reduction,
//! the universal model's cross coefficient, the KTM–TD comparison and
//! decoherence reports.

use crate::error::{Error, Result};
use crate::hilbert::{position_op, HilbertSpec, Mode};
use crate::kernels::{RadialKernel, SmearingProfile};
use crate::linalg::{self, symmetric_eigen_desc, C64};
use crate::models::{coupling_tensor, earth_atom_rate, linearized_td, minimize_gamma, LinearCoefficients, ModelParams};
use crate::prelude::*;
use nalgebra::DMatrix;

/// Assignment of particles to subsystems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    n_groups: usize,
}

impl Partition {
    /// `assignment[α]` is the group of particle α; groups are `0..k` and all non-empty.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n_groups = assignment.iter().max().map_or(0, |m| m + 1);
        if assignment.is_empty() {
            return Err(Error::InvalidParameter("partition of zero particles".into()));
        }
        if let Some(g) = (0..n_groups).find(|g| !assignment.contains(g)) {
            return Err(Error::InvalidParameter(format!("group {g} is empty")));
        }
        Ok(Self { assignment, n_groups })
    }

    /// Partition from explicit groups of particle indices.
    pub fn from_groups(groups: &[Vec<usize>], n_particles: usize) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n_particles];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidParameter(format!("group {g} is empty")));
            }
            for &a in members {
                let slot = assignment
                    .get_mut(a)
                    .ok_or_else(|| Error::InvalidParameter(format!("particle {a} out of range for {n_particles}")))?;
                if *slot != usize::MAX {
                    return Err(Error::InvalidParameter(format!("particle {a} assigned twice")));
                }
                *slot = g;
            }
        }
        if let Some(a) = assignment.iter().position(|&g| g == usize::MAX) {
            return Err(Error::InvalidParameter(format!("particle {a} is not assigned")));
        }
        Self::new(assignment)
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_particles(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_of(&self, particle: usize) -> usize {
        self.assignment[particle]
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.n_particles()).filter(|&a| self.assignment[a] == group).collect()
    }
}

/// Symmetric coefficient matrix of `−Σ D_ij [y_i,[y_j,ρ]]` with labelled coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceMatrix {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl DecoherenceMatrix {
    pub fn new(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || labels.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: labels.len() });
        }
        Ok(Self { matrix, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (v, _) = symmetric_eigen_desc(&(0.5 * (&self.matrix + self.matrix.transpose())));
        v.last().copied().unwrap_or(0.0)
    }

    /// PSD with eigenvalue floor `−1e−10` relative to the largest entry.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-10 * self.matrix.amax().max(f64::MIN_POSITIVE)
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.len()).all(|i| (0..self.len()).all(|j| i == j || self.matrix[(i, j)] == 0.0))
    }
}

/// Axes present in a coefficient table, in first-appearance order.
fn axes_of(c: &LinearCoefficients) -> Vec<usize> {
    let mut axes = Vec::new();
    for &a in &c.axis {
        if !axes.contains(&a) {
            axes.push(a);
        }
    }
    axes
}

/// Center-of-mass reduction: `[x_{βj},[x_{εi},ρ]] → [X^σ_j,[X^μ_i,ρ_CM]]`
/// for `β ∈ σ`, `ε ∈ μ`.
///
/// The output is indexed by `(group, axis)`; entries are exact sums of the
/// input coefficients.
pub fn com_reduce(c: &LinearCoefficients, partition: &Partition) -> Result<DecoherenceMatrix> {
    let n_particles = c.particle.iter().max().map_or(0, |m| m + 1);
    if partition.n_particles() != n_particles {
        return Err(Error::DimensionMismatch { expected: n_particles, found: partition.n_particles() });
    }
    let axes = axes_of(c);
    let na = axes.len();
    let slot = |i: usize| partition.group_of(c.particle[i]) * na + axes.iter().position(|&a| a == c.axis[i]).unwrap();
    let size = partition.n_groups() * na;
    let mut m = DMatrix::zeros(size, size);
    for i in 0..c.len() {
        for j in 0..c.len() {
            m[(slot(i), slot(j))] += c.decoherence[(i, j)];
        }
    }
    let labels = (0..size).map(|k| format!("X{}{}", k / na + 1, ["x", "y", "z"][axes[k % na]])).collect();
    DecoherenceMatrix::new(m, labels)
}

/// `S` and its per-particle decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossCoefficient {
    pub total: f64,
    /// Contribution of each measured particle α.
    pub contributions: Vec<f64>,
}

/// `S = 2 Σ_α Σ_{β∈A∖α} Σ_{ε∈B∖α} K_{αβ} K_{αε} / γ_α` for the universal
/// model along the z-axis, `K_{αβ} = K_{αβzz}`.
///
/// For three collinear masses and `A = {1,2}`, `B = {3}` this is
/// `2(K₁₂K₁₃/γ₁ + K₂₁K₂₃/γ₂)`. At the level of [`com_reduce`] the two cross
/// entries `(A,B)` and `(B,A)` each equal `S/4`.
pub fn cross_coefficient(params: &ModelParams, rates: &[f64], a: &[usize], b: &[usize]) -> Result<CrossCoefficient> {
    let n = params.n_particles();
    if rates.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rates.len() });
    }
    if let Some(g) = rates.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::NonPositiveRate(*g));
    }
    if a.is_empty() || b.is_empty() || a.iter().any(|x| b.contains(x)) || a.iter().chain(b).any(|&x| x >= n) {
        return Err(Error::InvalidParameter("groups must be non-empty, disjoint and in range".into()));
    }
    let k = coupling_tensor(params);
    if (0..n).all(|x| (0..n).all(|y| x == y || k.get(x, y, 2, 2) == 0.0)) {
        return Err(Error::InvalidParameter("degenerate geometry: no z-axis coupling".into()));
    }
    let contributions: Vec<f64> = (0..n)
        .map(|al| {
            let mut s = 0.0;
            for &be in a.iter().filter(|&&x| x != al) {
                for &ep in b.iter().filter(|&&x| x != al) {
                    s += k.get(al, be, 2, 2) * k.get(al, ep, 2, 2);
                }
            }
            2.0 * s / rates[al]
        })
        .collect();
    Ok(CrossCoefficient { total: contributions.iter().sum(), contributions })
}

/// KTM and linearized TD decoherence matrices for two particles on the z-axis.
#[derive(Clone, Debug, PartialEq)]
pub struct KtmTdComparison {
    pub ktm: DecoherenceMatrix,
    pub td: DecoherenceMatrix,
    pub ktm_rates: [f64; 2],
    /// `|η₁₂| / √(η₁₁ η₂₂)` of the TD matrix.
    pub td_offdiagonal_ratio: f64,
}

/// KTM rates default to `γ_min = 2ħK`.
pub fn compare_ktm_td(
    params: &ModelParams,
    kernel: &RadialKernel,
    smearing: &SmearingProfile,
    ktm_rates: Option<[f64; 2]>,
) -> Result<KtmTdComparison> {
    if params.n_particles() != 2 {
        return Err(Error::InvalidParameter(format!("comparison needs 2 particles, got {}", params.n_particles())));
    }
    let k = coupling_tensor(params).get(0, 1, 2, 2);
    let hbar = params.hbar;
    let rates = match ktm_rates {
        Some(r) => r,
        None => {
            let g = minimize_gamma(k.abs(), hbar)?.gamma;
            [g, g]
        }
    };
    if let Some(g) = rates.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::NonPositiveRate(*g));
    }
    let diag = |a: usize| rates[a] / (8.0 * hbar * hbar) + k * k / (2.0 * rates[1 - a]);
    let ktm = DMatrix::from_fn(2, 2, |i, j| if i == j { diag(i) } else { 0.0 });
    let td = linearized_td(params, kernel, smearing, &[2])?.coefficients.decoherence;
    let ratio = td[(0, 1)].abs() / libm::sqrt(td[(0, 0)] * td[(1, 1)]);
    let labels = vec!["x1z".to_string(), "x2z".to_string()];
    Ok(KtmTdComparison {
        ktm: DecoherenceMatrix::new(ktm, labels.clone())?,
        td: DecoherenceMatrix::new(td, labels)?,
        ktm_rates: rates,
        td_offdiagonal_ratio: ratio,
    })
}

/// Physical inputs of an Earth–atom order-of-magnitude estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarthAtomScenario {
    pub geometry: f64,
    pub m_atom: f64,
    pub m_earth: f64,
    pub r_earth: f64,
    pub hbar: f64,
    pub g: f64,
    /// Superposition size Δz.
    pub delta_z: f64,
    /// Duration T.
    pub duration: f64,
}

impl Default for EarthAtomScenario {
    fn default() -> Self {
        Self {
            geometry: 0.47,
            m_atom: 1.4e-25,
            m_earth: 6e24,
            r_earth: 6e6,
            hbar: crate::models::HBAR_SI,
            g: crate::models::G_SI,
            delta_z: 0.0,
            duration: 0.0,
        }
    }
}

/// Minimized KTM coefficient for a named coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimizedEntry {
    pub label: String,
    pub k: f64,
    pub gamma_min: f64,
    pub coefficient: f64,
}

/// Order-of-magnitude decoherence summary.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceReport {
    pub scenario: EarthAtomScenario,
    pub lambda: f64,
    /// `Λ Δz² T`, the exponent of the visibility suppression `e^{−Λ Δz² T}`.
    pub exponent: f64,
    pub minimized: Vec<MinimizedEntry>,
}

impl DecoherenceReport {
    /// Exponent in decimal orders of magnitude.
    pub fn decades(&self) -> f64 {
        self.exponent / core::f64::consts::LN_10
    }

    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let mut out = String::from("Decoherence report (order-of-magnitude estimate, not a prediction)\n");
        out += &format!(
            "Earth-atom: C = {}, m = {:e} kg, M = {:e} kg, R = {:e} m\n",
            s.geometry, s.m_atom, s.m_earth, s.r_earth
        );
        out += &format!("Lambda = {:.6e} m^-2 s^-1\n", self.lambda);
        out += &format!(
            "exponent Lambda*dz^2*T = {:.6e} (dz = {:e} m, T = {:e} s), i.e. {:.3e} decades\n",
            self.exponent,
            s.delta_z,
            s.duration,
            self.decades()
        );
        for e in &self.minimized {
            out += &format!("{}: K = {:e}, gamma_min = {:e}, coefficient = {:e}\n", e.label, e.k, e.gamma_min, e.coefficient);
        }
        out
    }
}

pub fn decoherence_report(scenario: &EarthAtomScenario, couplings: &[(String, f64)]) -> Result<DecoherenceReport> {
    let s = scenario;
    let lambda = earth_atom_rate(s.geometry, s.m_atom, s.m_earth, s.r_earth, s.hbar, s.g)?;
    let minimized = couplings
        .iter()
        .map(|(label, k)| {
            let m = minimize_gamma(*k, s.hbar)?;
            Ok(MinimizedEntry { label: label.clone(), k: *k, gamma_min: m.gamma, coefficient: m.coefficient })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecoherenceReport { scenario: *s, lambda, exponent: lambda * s.delta_z * s.delta_z * s.duration, minimized })
}

/// Numerical trace-out check of [`com_reduce`] for two particles on one axis
/// grouped into a single subsystem.
///
/// The dissipator `−Σ D_ij [x_i,[x_j,·]]` is applied to `ρ_CM ⊗ σ_rel` on a
/// Fock space of the center-of-mass and relative coordinates, the relative
/// factor is traced out and compared with `−D_CM [X,[X,ρ_CM]]`. Returns the
/// largest entrywise deviation.
pub fn trace_out_deviation(decoherence: &DMatrix<f64>, masses: [f64; 2], cutoff: usize) -> Result<f64> {
    if decoherence.nrows() != 2 || decoherence.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: decoherence.nrows() });
    }
    let total = masses[0] + masses[1];
    let space = HilbertSpec::uniform(vec![Mode::harmonic(total, 1.0), Mode::harmonic(masses[0] * masses[1] / total, 1.0)], cutoff, 1.0)?;
    let big_x = position_op(&space, 0)?.to_dense();
    let rel = position_op(&space, 1)?.to_dense();
    let x = [&big_x + &rel * C64::from(masses[1] / total), &big_x - &rel * C64::from(masses[0] / total)];
    // deterministic, generic states
    let rho_cm = test_state(cutoff, 3);
    let sigma = test_state(cutoff, 5);
    let rho = rho_cm.kronecker(&sigma);
    let dc = |a: &DMatrix<C64>, b: &DMatrix<C64>, r: &DMatrix<C64>| {
        let inner = b * r - r * b;
        a * &inner - &inner * a
    };
    let mut out = DMatrix::zeros(rho.nrows(), rho.ncols());
    for i in 0..2 {
        for j in 0..2 {
            out -= dc(&x[i], &x[j], &rho) * C64::from(decoherence[(i, j)]);
        }
    }
    let reduced = partial_trace_second(&out, cutoff, cutoff);
    let d_cm = decoherence.sum();
    let xs = position_op(&HilbertSpec::uniform(vec![Mode::harmonic(total, 1.0)], cutoff, 1.0)?, 0)?.to_dense();
    let expected = -dc(&xs, &xs, &rho_cm) * C64::from(d_cm);
    Ok(linalg::max_abs(&(reduced - expected)))
}

fn test_state(dim: usize, seed: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(dim, dim, |i, j| C64::new(((i * 7 + j * seed + 1) % 11) as f64 - 5.0, ((i + 3 * j + seed) % 7) as f64 - 3.0));
    let mut r = &a * a.adjoint();
    let t = linalg::trace(&r);
    r /= t;
    r
}

fn partial_trace_second(m: &DMatrix<C64>, d1: usize, d2: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d1, d1, |i, j| (0..d2).map(|k| m[(i * d2 + k, j * d2 + k)]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{dp_kernel, SmearingProfile};
    use crate::models::{coupling_k, pairwise_protocol, universal_protocol, Rates};
    use approx::assert_relative_eq;

    fn line(masses: Vec<f64>, z: &[f64]) -> ModelParams {
        let n = masses.len();
        ModelParams::collinear(masses, z, vec![1.0; n], 0.1, 1.0).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 2]).is_err());
        assert!(Partition::from_groups(&[vec![0, 1], vec![1]], 2).is_err());
        assert!(Partition::from_groups(&[vec![0]], 2).is_err());
        let p = Partition::from_groups(&[vec![0, 1], vec![2]], 3).unwrap();
        assert_eq!(p.members(0), vec![0, 1]);
        assert_eq!(p.n_groups(), 2);
    }

    #[test]
    fn pairwise_reduction_has_no_cross_block() {
        let p = line(vec![1.0; 3], &[0.0, 1.0, 2.0]);
        let c = pairwise_protocol(&p, &Rates::Uniform(0.3), &[2]).unwrap().coefficients();
        let part = Partition::from_groups(&[vec![0, 1], vec![2]], 3).unwrap();
        let m = com_reduce(&c, &part).unwrap();
        assert_eq!(m.matrix[(0, 1)], 0.0);
        assert_eq!(m.matrix[(1, 0)], 0.0);
        // group {3}: γ/8 from its two measurements plus K²/2γ from each partner's feedback
        let (k13, k23) = (coupling_k(1.0, 1.0, 2.0, 0.1).unwrap(), coupling_k(1.0, 1.0, 1.0, 0.1).unwrap());
        let g = 0.3;
        assert_relative_eq!(m.matrix[(1, 1)], 2.0 * g / 8.0 + (k13 * k13 + k23 * k23) / (2.0 * g), max_relative = 1e-14);
    }

    #[test]
    fn two_singletons_reduce_to_ktm() {
        let p = line(vec![1.0, 1.0], &[0.0, 1.0]);
        let c = pairwise_protocol(&p, &Rates::Explicit(vec![0.2, 0.2, 0.2, 0.2]), &[2]).unwrap().coefficients();
        let m = com_reduce(&c, &Partition::new(vec![0, 1]).unwrap()).unwrap();
        let k = coupling_k(1.0, 1.0, 1.0, 0.1).unwrap();
        for i in 0..2 {
            assert_relative_eq!(m.matrix[(i, i)], 0.2 / 8.0 + k * k / 0.4, max_relative = 1e-14);
        }
        assert!(m.is_diagonal());
    }

    #[test]
    fn universal_cross_entries_match_the_cross_coefficient() {
        let p = line(vec![1.0, 2.0, 0.5], &[0.0, 1.0, 2.5]);
        let rates = [0.3, 0.5, 0.7];
        let c = universal_protocol(&p, &Rates::Explicit(rates.to_vec()), &[2]).unwrap().coefficients();
        let part = Partition::from_groups(&[vec![0, 1], vec![2]], 3).unwrap();
        let m = com_reduce(&c, &part).unwrap();
        let s = cross_coefficient(&p, &rates, &[0, 1], &[2]).unwrap();
        assert!(s.total > 0.0);
        assert_relative_eq!(4.0 * m.matrix[(0, 1)], s.total, max_relative = 1e-12);
        assert_relative_eq!(m.matrix[(0, 1)], m.matrix[(1, 0)], max_relative = 1e-15);
        assert!(m.matrix[(0, 1)].abs() > 1e-12 * m.matrix.amax());
        assert_eq!(s.contributions[2], 0.0);
    }

    #[test]
    fn cross_coefficient_examples() {
        let (m, d, g) = (1.0, 1.0, 0.4);
        let p = line(vec![m; 3], &[0.0, d, 2.0 * d]);
        let k = |dist: f64| coupling_k(m, m, dist, 0.1).unwrap();
        let s = cross_coefficient(&p, &[g; 3], &[0, 1], &[2]).unwrap();
        assert_relative_eq!(s.total, 2.0 * (k(d) * k(2.0 * d) + k(d) * k(d)) / g, max_relative = 1e-12);
        let swapped = cross_coefficient(&p, &[g; 3], &[2], &[0, 1]).unwrap();
        assert_relative_eq!(swapped.total, s.total, max_relative = 1e-14);
        let strong = cross_coefficient(&p, &[1e12; 3], &[0, 1], &[2]).unwrap();
        assert!(strong.total < 1e-12 * s.total * 1e3);
    }

    #[test]
    fn single_group_is_the_sum_rule() {
        let p = line(vec![1.0, 2.0, 0.5], &[0.0, 1.0, 2.5]);
        let c = universal_protocol(&p, &Rates::Uniform(0.4), &[2]).unwrap().coefficients();
        let m = com_reduce(&c, &Partition::new(vec![0, 0, 0]).unwrap()).unwrap();
        assert_eq!(m.len(), 1);
        assert_relative_eq!(m.matrix[(0, 0)], c.decoherence.sum(), max_relative = 1e-14);
    }

    #[test]
    fn reduction_is_linear() {
        let p = line(vec![1.0, 2.0, 0.5], &[0.0, 1.0, 2.5]);
        let mut c = universal_protocol(&p, &Rates::Uniform(0.4), &[2]).unwrap().coefficients();
        let part = Partition::new(vec![0, 0, 1]).unwrap();
        let base = com_reduce(&c, &part).unwrap().matrix;
        c.decoherence *= 3.5;
        let scaled = com_reduce(&c, &part).unwrap().matrix;
        assert!((scaled - base * 3.5).amax() < 1e-14);
    }

    #[test]
    fn numerical_trace_out_agrees() {
        let d = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.5]);
        assert!(trace_out_deviation(&d, [1.0, 1.0], 4).unwrap() < 1e-12);
        assert!(trace_out_deviation(&d, [1.0, 3.0], 4).unwrap() < 1e-12);
    }

    #[test]
    fn ktm_td_comparison() {
        let p = line(vec![1.0, 1.0], &[0.0, 5.0]);
        let s = SmearingProfile::power_gaussian(1.0, 2.0).unwrap();
        let r = compare_ktm_td(&p, &dp_kernel(1.0, 0.1).unwrap(), &s, None).unwrap();
        assert!(r.ktm.is_diagonal());
        assert!(r.td.is_psd());
        assert!(r.td_offdiagonal_ratio > 1e-3);
        let far = compare_ktm_td(&line(vec![1.0, 1.0], &[0.0, 9.0]), &dp_kernel(1.0, 0.1).unwrap(), &s, None).unwrap();
        assert!(far.td_offdiagonal_ratio < r.td_offdiagonal_ratio);
    }

    #[test]
    fn report_scaling() {
        let mut s = EarthAtomScenario { delta_z: 1e-3, duration: 1.0, ..Default::default() };
        let r = decoherence_report(&s, &[("ktm".into(), 1.0)]).unwrap();
        assert!((r.lambda / 1.16e3 - 1.0).abs() < 0.05);
        assert_eq!(r.minimized[0].gamma_min, 2.0 * s.hbar);
        s.delta_z = 2e-3;
        assert_relative_eq!(decoherence_report(&s, &[]).unwrap().exponent, 4.0 * r.exponent, max_relative = 1e-14);
        s.delta_z = 0.0;
        assert_eq!(decoherence_report(&s, &[]).unwrap().exponent, 0.0);
        assert!(r.to_text().contains("order-of-magnitude"));
    }
}
