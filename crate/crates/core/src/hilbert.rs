//! Truncated Fock spaces of trapped modes and their operator algebra.

use crate::error::{Error, Result, Warning};
use crate::linalg::{self, CsrMatrix, C64, ONE, ZERO};
use crate::prelude::*;
use core::ops::{Add, Mul, Sub};
use nalgebra::DMatrix;

/// Default cap on the total Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Top-level population above which a state is flagged as truncation-affected.
pub const LEAKAGE_THRESHOLD: f64 = 1e-6;

/// One trapped degree of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub mass: f64,
    pub trap_frequency: f64,
    /// Overrides `sqrt(ħ / (m Ω))`; required when `trap_frequency == 0`.
    pub length_scale: Option<f64>,
}

impl Mode {
    pub fn harmonic(mass: f64, trap_frequency: f64) -> Self {
        Self { mass, trap_frequency, length_scale: None }
    }

    pub fn free(mass: f64, length_scale: f64) -> Self {
        Self { mass, trap_frequency: 0.0, length_scale: Some(length_scale) }
    }
}

/// Product of per-mode Fock spaces, mode 0 being the most significant index.
#[derive(Clone, Debug, PartialEq)]
pub struct HilbertSpec {
    modes: Vec<Mode>,
    cutoffs: Vec<usize>,
    hbar: f64,
}

impl HilbertSpec {
    pub fn new(modes: Vec<Mode>, cutoffs: Vec<usize>, hbar: f64) -> Result<Self> {
        Self::with_max_dim(modes, cutoffs, hbar, DEFAULT_MAX_DIM)
    }

    /// Same cutoff `m` for every mode.
    pub fn uniform(modes: Vec<Mode>, m: usize, hbar: f64) -> Result<Self> {
        let cutoffs = vec![m; modes.len()];
        Self::new(modes, cutoffs, hbar)
    }

    pub fn with_max_dim(modes: Vec<Mode>, cutoffs: Vec<usize>, hbar: f64, max_dim: usize) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidSpace("at least one mode is required".into()));
        }
        if modes.len() != cutoffs.len() {
            return Err(Error::InvalidSpace(format!(
                "{} modes but {} cutoffs",
                modes.len(),
                cutoffs.len()
            )));
        }
        if !(hbar > 0.0) {
            return Err(Error::InvalidSpace(format!("hbar must be positive, got {hbar}")));
        }
        for (i, (mode, &m)) in modes.iter().zip(&cutoffs).enumerate() {
            if m < 2 {
                return Err(Error::InvalidSpace(format!("mode {i}: cutoff {m} < 2")));
            }
            if !(mode.mass > 0.0) {
                return Err(Error::InvalidSpace(format!("mode {i}: mass must be positive")));
            }
            if !(mode.trap_frequency >= 0.0) {
                return Err(Error::InvalidSpace(format!("mode {i}: negative trap frequency")));
            }
            match mode.length_scale {
                Some(l) if !(l > 0.0) => {
                    return Err(Error::InvalidSpace(format!("mode {i}: length scale must be positive")))
                }
                None if mode.trap_frequency == 0.0 => return Err(Error::MissingLengthScale(i)),
                _ => {}
            }
        }
        let mut dim: usize = 1;
        for &m in &cutoffs {
            dim = dim.saturating_mul(m);
        }
        if dim > max_dim {
            return Err(Error::DimensionTooLarge { dim, max: max_dim });
        }
        Ok(Self { modes, cutoffs, hbar })
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.iter().product()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    fn check_mode(&self, mode: usize) -> Result<&Mode> {
        self.modes.get(mode).ok_or(Error::ModeOutOfRange { index: mode, modes: self.modes.len() })
    }

    /// Oscillator length `sqrt(ħ/(mΩ))` or the explicit override.
    pub fn length_scale(&self, mode: usize) -> Result<f64> {
        let m = self.check_mode(mode)?;
        match m.length_scale {
            Some(l) => Ok(l),
            None => Ok((self.hbar / (m.mass * m.trap_frequency)).sqrt()),
        }
    }

    /// Flat basis index of the occupation tuple `levels`.
    pub fn index_of(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.cutoffs.len() {
            return Err(Error::DimensionMismatch { expected: self.cutoffs.len(), found: levels.len() });
        }
        let mut idx = 0;
        for (i, (&n, &m)) in levels.iter().zip(&self.cutoffs).enumerate() {
            if n >= m {
                return Err(Error::InvalidParameter(format!("level {n} of mode {i} exceeds cutoff {m}")));
            }
            idx = idx * m + n;
        }
        Ok(idx)
    }

    /// Occupation tuple of flat basis index `index`.
    pub fn levels_of(&self, mut index: usize) -> Vec<usize> {
        let mut levels = vec![0; self.cutoffs.len()];
        for (slot, &m) in self.cutoffs.iter().enumerate().rev() {
            levels[slot] = index % m;
            index /= m;
        }
        levels
    }

    fn embed(&self, factor: CsrMatrix, mode: usize) -> CsrMatrix {
        CsrMatrix::embed(&factor, &self.cutoffs, mode)
    }
}

/// Operator on a [`HilbertSpec`], stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CsrMatrix,
    hermitian_hint: bool,
}

impl Operator {
    /// Wraps `matrix`; if `hermitian_hint` is set the matrix is checked.
    pub fn new(matrix: CsrMatrix, hermitian_hint: bool) -> Result<Self> {
        if hermitian_hint && matrix.hermitian_defect() > 1e-12 * matrix.max_abs() {
            return Err(Error::NotHermitian("operator flagged Hermitian".into()));
        }
        Ok(Self { matrix, hermitian_hint })
    }

    pub fn from_dense(m: &DMatrix<C64>, hermitian_hint: bool) -> Result<Self> {
        Self::new(CsrMatrix::from_dense(m), hermitian_hint)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: CsrMatrix::zeros(dim), hermitian_hint: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: CsrMatrix::identity(dim), hermitian_hint: true }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.to_dense()
    }

    /// Checks Hermiticity numerically against `max|A − A†| ≤ tol·max|A|`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.matrix.hermitian_defect() <= tol * self.matrix.max_abs()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), hermitian_hint: self.hermitian_hint }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { matrix: self.matrix.matmul(&other.matrix), hermitian_hint: false }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { matrix: self.matrix.scale(C64::new(s, 0.0)), hermitian_hint: self.hermitian_hint }
    }

    pub fn scaled_complex(&self, s: C64) -> Self {
        let hint = self.hermitian_hint && s.im == 0.0;
        Self { matrix: self.matrix.scale(s), hermitian_hint: hint }
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        let m = self.matrix.matmul(&other.matrix).add_scaled(&other.matrix.matmul(&self.matrix), ONE);
        Self { matrix: m, hermitian_hint: self.hermitian_hint && other.hermitian_hint }
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        let m = self.matrix.matmul(&other.matrix).add_scaled(&other.matrix.matmul(&self.matrix), -ONE);
        Self { matrix: m, hermitian_hint: false }
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> C64 {
        self.matrix.quadratic_form(psi.amplitudes())
    }

    /// `Tr(ρ A)`.
    pub fn expectation_in(&self, rho: &DMatrix<C64>) -> C64 {
        self.matrix.iter().map(|(r, c, v)| v * rho[(c, r)]).sum()
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        self.matrix.matvec(psi)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.matrix.max_abs()
    }

    /// Largest entry modulus of `self − other`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.matrix.add_scaled(&other.matrix, -ONE).max_abs()
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: self.matrix.add_scaled(&rhs.matrix, ONE),
            hermitian_hint: self.hermitian_hint && rhs.hermitian_hint,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: self.matrix.add_scaled(&rhs.matrix, -ONE),
            hermitian_hint: self.hermitian_hint && rhs.hermitian_hint,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.compose(rhs)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scaled(self)
    }
}

fn lowering(m: usize) -> CsrMatrix {
    let t = (1..m).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))).collect();
    CsrMatrix::from_triplets(m, t)
}

/// Annihilation operator of `mode`, embedded in the full space.
pub fn ladder_op(spec: &HilbertSpec, mode: usize) -> Result<Operator> {
    spec.check_mode(mode)?;
    let a = lowering(spec.cutoffs[mode]);
    Ok(Operator { matrix: spec.embed(a, mode), hermitian_hint: false })
}

/// `x = (ℓ/√2)(a + a†)`.
pub fn position_op(spec: &HilbertSpec, mode: usize) -> Result<Operator> {
    let l = spec.length_scale(mode)?;
    let a = lowering(spec.cutoffs[mode]);
    let x = a.add_scaled(&a.adjoint(), ONE).scale(C64::new(l / core::f64::consts::SQRT_2, 0.0));
    Ok(Operator { matrix: spec.embed(x, mode), hermitian_hint: true })
}

/// `p = i (ħ/(ℓ√2)) (a† − a)`.
pub fn momentum_op(spec: &HilbertSpec, mode: usize) -> Result<Operator> {
    let l = spec.length_scale(mode)?;
    let a = lowering(spec.cutoffs[mode]);
    let s = spec.hbar / (l * core::f64::consts::SQRT_2);
    let p = a.adjoint().add_scaled(&a, -ONE).scale(C64::new(0.0, s));
    Ok(Operator { matrix: spec.embed(p, mode), hermitian_hint: true })
}

/// `n = a†a`.
pub fn number_op(spec: &HilbertSpec, mode: usize) -> Result<Operator> {
    spec.check_mode(mode)?;
    let m = spec.cutoffs[mode];
    let n = CsrMatrix::from_diagonal(&(0..m).map(|k| C64::new(k as f64, 0.0)).collect::<Vec<_>>());
    Ok(Operator { matrix: spec.embed(n, mode), hermitian_hint: true })
}

pub fn identity_op(spec: &HilbertSpec) -> Operator {
    Operator::identity(spec.dim())
}

/// `H0 = Σ p²/2m + ½ m Ω² x²`, built from products of truncated operators.
pub fn free_hamiltonian(spec: &HilbertSpec) -> Result<Operator> {
    let mut h = Operator::zeros(spec.dim());
    for (k, mode) in spec.modes.iter().enumerate() {
        let p = momentum_op(spec, k)?;
        h = &h + &(&p * &p).scaled(0.5 / mode.mass);
        if mode.trap_frequency > 0.0 {
            let x = position_op(spec, k)?;
            let w = mode.trap_frequency;
            h = &h + &(&x * &x).scaled(0.5 * mode.mass * w * w);
        }
    }
    let mut dense = h.to_dense();
    linalg::symmetrize(&mut dense);
    Operator::from_dense(&dense, true)
}

/// Unit-norm pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes`; fails on a zero vector.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = norm(&amplitudes);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("state vector has zero or non-finite norm".into()));
        }
        Ok(Self { amplitudes: amplitudes.into_iter().map(|a| a / norm).collect() })
    }

    /// Fock state `|n_0, n_1, ...⟩`.
    pub fn basis(spec: &HilbertSpec, levels: &[usize]) -> Result<Self> {
        let mut amps = vec![ZERO; spec.dim()];
        amps[spec.index_of(levels)?] = ONE;
        Ok(Self { amplitudes: amps })
    }

    pub fn ground(spec: &HilbertSpec) -> Self {
        let mut amps = vec![ZERO; spec.dim()];
        amps[0] = ONE;
        Self { amplitudes: amps }
    }

    /// Product of truncated coherent states `|α_k⟩`, renormalized.
    pub fn coherent(spec: &HilbertSpec, alphas: &[C64]) -> Result<Self> {
        if alphas.len() != spec.n_modes() {
            return Err(Error::DimensionMismatch { expected: spec.n_modes(), found: alphas.len() });
        }
        let factors: Vec<Vec<C64>> = alphas
            .iter()
            .zip(&spec.cutoffs)
            .map(|(&alpha, &m)| {
                let mut c = Vec::with_capacity(m);
                let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
                for n in 0..m {
                    c.push(term);
                    term = term * alpha / ((n + 1) as f64).sqrt();
                }
                c
            })
            .collect();
        let amps = (0..spec.dim())
            .map(|i| spec.levels_of(i).iter().zip(&factors).map(|(&n, f)| f[n]).product())
            .collect();
        Self::new(amps)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// `⟨ψ|A|ψ⟩` (real part for Hermitian `A`).
    pub fn expect(&self, op: &Operator) -> f64 {
        op.expectation(self).re
    }

    pub fn projector(&self) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |r, c| self.amplitudes[r] * self.amplitudes[c].conj())
    }

    /// Population of the top Fock level of each mode.
    pub fn top_level_populations(&self, spec: &HilbertSpec) -> Vec<f64> {
        let diag: Vec<f64> = self.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        top_levels(spec, &diag)
    }

    pub(crate) fn from_normalized(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }
}

pub(crate) fn norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn top_levels(spec: &HilbertSpec, diag: &[f64]) -> Vec<f64> {
    let mut pops = vec![0.0; spec.n_modes()];
    for (i, p) in diag.iter().enumerate() {
        for (k, (&n, &m)) in spec.levels_of(i).iter().zip(&spec.cutoffs).enumerate() {
            if n == m - 1 {
                pops[k] += p;
            }
        }
    }
    pops
}

/// Warnings for modes whose top-level population exceeds [`LEAKAGE_THRESHOLD`].
pub fn leakage_warnings(populations: &[f64], t: f64) -> Vec<Warning> {
    populations
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > LEAKAGE_THRESHOLD)
        .map(|(mode, &population)| Warning::TruncationLeakage { mode, population, t })
        .collect()
}

/// Hermitian, unit-trace, numerically positive matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    /// Validates Hermiticity (1e−10), trace (1 ± 1e−9) and positivity (≥ −1e−8).
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidDensity("matrix is not square".into()));
        }
        let defect = linalg::hermitian_defect(&matrix);
        if defect > 1e-10 {
            return Err(Error::InvalidDensity(format!("Hermiticity defect {defect:.3e}")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > 1e-9 {
            return Err(Error::InvalidDensity(format!("trace {tr} differs from 1")));
        }
        let min = linalg::min_eigenvalue(&matrix);
        if min < -1e-8 {
            return Err(Error::InvalidDensity(format!("eigenvalue {min:.3e} below -1e-8")));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self { matrix: psi.projector() }
    }

    /// Maximally mixed state `1/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim).map(|v: C64| v / dim as f64) }
    }

    pub(crate) fn from_unchecked(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn expect(&self, op: &Operator) -> f64 {
        op.expectation_in(&self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    pub fn trace_distance(&self, other: &Self) -> f64 {
        linalg::trace_distance(&self.matrix, &other.matrix)
    }

    pub fn top_level_populations(&self, spec: &HilbertSpec) -> Vec<f64> {
        let diag: Vec<f64> = (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect();
        top_levels(spec, &diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(m: usize) -> HilbertSpec {
        HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0)], m, 1.0).unwrap()
    }

    fn pair(m: usize) -> HilbertSpec {
        HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0); 2], m, 1.0).unwrap()
    }

    #[test]
    fn ladder_matrix_elements() {
        let a = ladder_op(&unit(2), 0).unwrap().to_dense();
        assert_eq!(a[(0, 1)], ONE);
        assert_eq!(a[(0, 0)] + a[(1, 0)] + a[(1, 1)], ZERO);

        let spec = unit(3);
        let a = ladder_op(&spec, 0).unwrap();
        let two = StateVector::basis(&spec, &[2]).unwrap();
        let out = a.apply(two.amplitudes());
        assert_abs_diff_eq!(out[1].re, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(out[0].norm() + out[2].norm(), 0.0);
    }

    #[test]
    fn ladder_on_second_mode_acts_as_identity_tensor_a() {
        let spec = HilbertSpec::new(vec![Mode::harmonic(1.0, 1.0); 2], vec![3, 4], 1.0).unwrap();
        let a = ladder_op(&spec, 1).unwrap();
        for n0 in 0..3 {
            for n1 in 0..4 {
                let psi = StateVector::basis(&spec, &[n0, n1]).unwrap();
                let out = a.apply(psi.amplitudes());
                for (i, v) in out.iter().enumerate() {
                    let expected = if n1 > 0 && i == spec.index_of(&[n0, n1 - 1]).unwrap() {
                        (n1 as f64).sqrt()
                    } else {
                        0.0
                    };
                    assert_abs_diff_eq!(v.re, expected, epsilon = 1e-15);
                    assert_abs_diff_eq!(v.im, 0.0);
                }
            }
        }
    }

    #[test]
    fn position_and_momentum_two_level_matrices() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let x = position_op(&unit(2), 0).unwrap().to_dense();
        assert_abs_diff_eq!(x[(0, 1)].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(x[(1, 0)].re, s, epsilon = 1e-15);
        let p = momentum_op(&unit(2), 0).unwrap().to_dense();
        assert_abs_diff_eq!(p[(0, 1)].im, -s, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 0)].im, s, epsilon = 1e-15);
    }

    #[test]
    fn ground_state_variances() {
        let (m, w, hbar) = (2.5, 0.7, 1.3);
        for cutoff in [2, 5, 9] {
            let spec = HilbertSpec::uniform(vec![Mode::harmonic(m, w)], cutoff, hbar).unwrap();
            let l2 = hbar / (m * w);
            let g = StateVector::ground(&spec);
            let x = position_op(&spec, 0).unwrap();
            let p = momentum_op(&spec, 0).unwrap();
            assert_abs_diff_eq!(g.expect(&(&x * &x)), l2 / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(g.expect(&(&p * &p)), hbar * m * w / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn canonical_commutator_below_top_level() {
        let spec = HilbertSpec::uniform(vec![Mode::harmonic(1.7, 0.4)], 7, 0.9).unwrap();
        let x = position_op(&spec, 0).unwrap();
        let p = momentum_op(&spec, 0).unwrap();
        let c = x.commutator(&p).to_dense();
        for r in 0..6 {
            for k in 0..6 {
                let expected = if r == k { C64::new(0.0, 0.9) } else { ZERO };
                assert!((c[(r, k)] - expected).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn free_hamiltonian_spectrum() {
        let spec = unit(20);
        let ev = linalg::hermitian_eigenvalues(&free_hamiltonian(&spec).unwrap().to_dense());
        for (n, e) in ev.iter().take(8).enumerate() {
            assert_abs_diff_eq!(*e, n as f64 + 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn free_hamiltonian_of_identical_modes_adds_spectra() {
        let spec = pair(12);
        let mut ev = linalg::hermitian_eigenvalues(&free_hamiltonian(&spec).unwrap().to_dense());
        ev.truncate(6);
        let expected = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        for (e, x) in ev.iter().zip(expected) {
            assert_abs_diff_eq!(*e, x, epsilon = 1e-9);
        }
    }

    #[test]
    fn free_mode_hamiltonian_is_kinetic_only() {
        let spec = HilbertSpec::uniform(vec![Mode::free(2.0, 0.5)], 6, 1.0).unwrap();
        let p = momentum_op(&spec, 0).unwrap();
        let h = free_hamiltonian(&spec).unwrap();
        assert!(h.distance(&(&p * &p).scaled(0.25)) < 1e-14);
    }

    #[test]
    fn free_mode_without_length_scale_is_rejected() {
        let err = HilbertSpec::uniform(vec![Mode::harmonic(1.0, 0.0)], 4, 1.0).unwrap_err();
        assert_eq!(err, Error::MissingLengthScale(0));
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        assert!(HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0)], 1, 1.0).is_err());
        assert!(HilbertSpec::uniform(vec![Mode::harmonic(-1.0, 1.0)], 3, 1.0).is_err());
        assert!(matches!(
            HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0); 3], 17, 1.0),
            Err(Error::DimensionTooLarge { dim: 4913, max: 4096 })
        ));
        assert!(matches!(ladder_op(&unit(3), 1), Err(Error::ModeOutOfRange { index: 1, modes: 1 })));
    }

    #[test]
    fn number_operator() {
        let n = number_op(&unit(3), 0).unwrap().to_dense();
        for k in 0..3 {
            assert_eq!(n[(k, k)].re, k as f64);
        }
        let spec = unit(6);
        let tr = linalg::trace(&number_op(&spec, 0).unwrap().to_dense()).re;
        assert_eq!(tr, 15.0);
        let spec = pair(4);
        let (n0, n1) = (number_op(&spec, 0).unwrap(), number_op(&spec, 1).unwrap());
        assert_eq!(n0.commutator(&n1).max_abs(), 0.0);
    }

    #[test]
    fn leakage_flags_top_level() {
        let spec = pair(3);
        let psi = StateVector::new(
            (0..9).map(|i| if i == 0 { ONE } else if i == spec.index_of(&[0, 2]).unwrap() { C64::new(0.01, 0.0) } else { ZERO }).collect(),
        )
        .unwrap();
        let pops = psi.top_level_populations(&spec);
        assert_eq!(pops[0], 0.0);
        assert!(pops[1] > 9e-5);
        let w = leakage_warnings(&pops, 0.25);
        assert_eq!(w.len(), 1);
        assert!(matches!(w[0], Warning::TruncationLeakage { mode: 1, .. }));
    }

    #[test]
    fn coherent_state_mean_position() {
        let spec = unit(30);
        let alpha = C64::new(0.8, -0.3);
        let psi = StateVector::coherent(&spec, &[alpha]).unwrap();
        let x = position_op(&spec, 0).unwrap();
        let p = momentum_op(&spec, 0).unwrap();
        assert_abs_diff_eq!(psi.expect(&x), 2f64.sqrt() * 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(psi.expect(&p), 2f64.sqrt() * -0.3, epsilon = 1e-12);
    }

    #[test]
    fn density_operator_validation() {
        let spec = unit(3);
        let rho = DensityOperator::from_pure(&StateVector::ground(&spec));
        assert!(DensityOperator::new(rho.matrix().clone()).is_ok());
        assert!(DensityOperator::new(rho.matrix() * C64::new(2.0, 0.0)).is_err());
        let mut bad = rho.matrix().clone();
        bad[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityOperator::new(bad).is_err());
        assert_abs_diff_eq!(DensityOperator::maximally_mixed(4).purity(), 0.25, epsilon = 1e-15);
    }
}
