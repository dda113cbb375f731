use super::coefficients::LinearCoefficients;
use super::{check_axes, coordinates, finish_correlated, ModelParams};
use crate::error::{Error, Result};
use crate::hilbert::free_hamiltonian;
use crate::kernels::{classify_integrand, eta_integrand, eta_tensor, Insertion, RadialKernel, SmearingProfile};
use crate::prelude::*;
use crate::stochastic::ProtocolSpec;
use core::f64::consts::PI;
use nalgebra::DMatrix;

/// Linearized TD model: η tensors for every ordered pair and the resulting
/// coefficient tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TdModel {
    pub params: ModelParams,
    pub axes: Vec<usize>,
    /// `η_{αβ2lj}`, row-major over `(α, β)`; diagonal blocks are zero.
    pub eta_hamiltonian: Vec<[[f64; 3]; 3]>,
    /// `η_{αβlj}` including `α = β`.
    pub eta_decoherence: Vec<[[f64; 3]; 3]>,
    pub coefficients: LinearCoefficients,
}

/// Rejects smearings for which any scalar `η₀, η₂, η₄` diverges.
pub fn td_preflight(smearing: &SmearingProfile, hbar: f64) -> Result<()> {
    for n in [0, 2, 4] {
        let c = classify_integrand(&eta_integrand(n, smearing, &Insertion::None, hbar)?)?;
        if !c.converges() {
            return Err(Error::Divergent(format!("eta_{n} with smearing {}: {c}", smearing.label())));
        }
    }
    Ok(())
}

/// Coefficient of `x_{αl} x_{βj}` for `α ≠ β`: `−2πG m_α m_β η_{αβ2lj}`.
pub(crate) fn hamiltonian_coefficient(g: f64, mm: f64, eta2: f64) -> f64 {
    -2.0 * PI * g * mm * eta2
}

/// Builds the linearized TD model for correlator `kernel` (γ̃) and smearing `g̃`.
///
/// Hamiltonian: `Σ_{α≠β} −2πG m_α m_β η_{αβ2lj} x_{αl} x_{βj}`.
/// Decoherence: `m_α m_β [(π³/8ħ⁵)^{1/2} η_{αβ0lj} + (8πħ)^{1/2} G² η_{αβ4lj}]`
/// with γ̃ inserted in `η₀` and `1/γ̃` in `η₄`.
pub fn linearized_td(params: &ModelParams, kernel: &RadialKernel, smearing: &SmearingProfile, axes: &[usize]) -> Result<TdModel> {
    check_axes(axes)?;
    let hbar = params.hbar;
    td_preflight(smearing, hbar)?;
    let n = params.n_particles();
    let na = axes.len();
    let c0 = libm::sqrt(PI * PI * PI / (8.0 * libm::pow(hbar, 5.0)));
    let c4 = libm::sqrt(8.0 * PI * hbar) * params.g * params.g;
    let corr = Insertion::Correlator(kernel.clone());
    let inv = Insertion::InverseCorrelator(kernel.clone());
    let mut eta_h = vec![[[0.0; 3]; 3]; n * n];
    let mut eta_d = vec![[[0.0; 3]; 3]; n * n];
    for a in 0..n {
        for b in 0..n {
            let d = params.displacement(a, b);
            // η(d) only depends on d through cos(k·d), so (α,β) and (β,α) agree
            if b < a {
                eta_h[a * n + b] = eta_h[b * n + a];
                eta_d[a * n + b] = eta_d[b * n + a];
                continue;
            }
            let e0 = eta_tensor(0, smearing, &corr, d, hbar)?;
            let e4 = eta_tensor(4, smearing, &inv, d, hbar)?;
            for l in 0..3 {
                for j in 0..3 {
                    eta_d[a * n + b][l][j] = c0 * e0[l][j] + c4 * e4[l][j];
                }
            }
            if a != b {
                eta_h[a * n + b] = eta_tensor(2, smearing, &Insertion::None, d, hbar)?;
            }
        }
    }
    let size = n * na;
    let particle: Vec<usize> = (0..size).map(|i| i / na).collect();
    let axis: Vec<usize> = (0..size).map(|i| axes[i % na]).collect();
    let mut coefficients = LinearCoefficients::zeros(particle.clone(), axis.clone());
    for i in 0..size {
        for j in 0..size {
            let (a, b) = (particle[i], particle[j]);
            let mm = params.masses[a] * params.masses[b];
            coefficients.decoherence[(i, j)] = mm * eta_d[a * n + b][axis[i]][axis[j]];
            if a != b {
                coefficients.hamiltonian[(i, j)] = hamiltonian_coefficient(params.g, mm, eta_h[a * n + b][axis[i]][axis[j]]);
            }
        }
    }
    Ok(TdModel { params: params.clone(), axes: axes.to_vec(), eta_hamiltonian: eta_h, eta_decoherence: eta_d, coefficients })
}

impl TdModel {
    pub fn n_particles(&self) -> usize {
        self.params.n_particles()
    }

    pub fn eta(&self, a: usize, b: usize) -> &[[f64; 3]; 3] {
        &self.eta_decoherence[a * self.n_particles() + b]
    }

    pub fn eta2(&self, a: usize, b: usize) -> &[[f64; 3]; 3] {
        &self.eta_hamiltonian[a * self.n_particles() + b]
    }

    /// Decoherence matrix over coordinates.
    pub fn decoherence_matrix(&self) -> &DMatrix<f64> {
        &self.coefficients.decoherence
    }

    /// Operator-level protocol: the bilinear Hamiltonian joins `H₀` and the
    /// decoherence matrix becomes correlated measurement noise `Γ = 8ħ² D`.
    pub fn build(&self, cutoff: usize) -> Result<ProtocolSpec> {
        let c = coordinates(&self.params, &self.axes, cutoff)?;
        let hbar = self.params.hbar;
        let coeffs = &self.coefficients;
        let mut h0 = free_hamiltonian(&c.space)?;
        for i in 0..coeffs.len() {
            for j in 0..coeffs.len() {
                let h = coeffs.hamiltonian[(i, j)];
                if h != 0.0 {
                    h0 = &h0 + &c.x[i].compose(&c.x[j]).scaled(h);
                }
            }
        }
        let gamma = &coeffs.decoherence * (8.0 * hbar * hbar);
        finish_correlated(h0, &c.x, &gamma, c.space, hbar, "td-linear".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::dp_kernel;
    use crate::linalg::symmetric_eigen_desc;
    use crate::master::lindblad_form;
    use crate::models::{coupling_tensor, ModelParams};

    fn k2(alpha: f64) -> SmearingProfile {
        SmearingProfile::power_gaussian(alpha, 2.0).unwrap()
    }

    #[test]
    fn gaussian_smearing_fails_preflight_on_eta4() {
        let e = td_preflight(&SmearingProfile::gaussian(1.0, 1.0).unwrap(), 1.0).unwrap_err();
        assert!(matches!(&e, Error::Divergent(m) if m.starts_with("eta_4")), "{e}");
        assert!(td_preflight(&k2(1.0), 1.0).is_ok());
    }

    #[test]
    fn decoherence_matrix_is_symmetric_psd() {
        let p = ModelParams::new(vec![1.0, 2.0], vec![[0.0; 3], [0.5, 0.2, 1.5]], vec![1.0; 2], 1.0, 1.0).unwrap();
        let m = linearized_td(&p, &dp_kernel(1.0, 1.0).unwrap(), &k2(0.5), &[0, 1, 2]).unwrap();
        let d = m.decoherence_matrix();
        assert!((d - d.transpose()).amax() < 1e-14 * d.amax());
        let (vals, _) = symmetric_eigen_desc(d);
        assert!(*vals.last().unwrap() > -1e-10 * vals[0]);
        // isotropy at zero separation
        let e = m.eta(0, 0);
        assert!((e[0][0] - e[2][2]).abs() < 1e-12 * e[0][0].abs() && e[0][1].abs() < 1e-14 * e[0][0].abs());
    }

    #[test]
    fn cross_term_at_five_widths() {
        let alpha: f64 = 1.0;
        let p = ModelParams::collinear(vec![1.0, 1.0], &[0.0, 5.0 * alpha.sqrt()], vec![1.0; 2], 1.0, 1.0).unwrap();
        let m = linearized_td(&p, &dp_kernel(1.0, 1.0).unwrap(), &k2(alpha), &[2]).unwrap();
        let d = m.decoherence_matrix();
        assert!(d[(0, 1)].abs() / (d[(0, 0)] * d[(1, 1)]).sqrt() > 1e-3);
    }

    #[test]
    fn newtonian_limit_fixes_the_hamiltonian_sign() {
        // A narrow Gaussian smearing leaves the far-field η₂ tensor Newtonian.
        // It fails the η₄ pre-flight, so the tensor is evaluated directly.
        let (g, m, d) = (1.0, 1.0, 1.0);
        let p = ModelParams::collinear(vec![m, m], &[0.0, d], vec![1.0; 2], g, 1.0).unwrap();
        let s = SmearingProfile::gaussian(0.05, 1.0).unwrap();
        let eta2 = eta_tensor(2, &s, &Insertion::None, p.displacement(0, 1), 1.0).unwrap();
        let k = coupling_tensor(&p);
        // the ordered pairs (1,2) and (2,1) together against the bilinear Newtonian term
        for axis in [0, 2] {
            let h = 2.0 * hamiltonian_coefficient(g, m * m, eta2[axis][axis]);
            assert!((h - k.get(0, 1, axis, axis)).abs() < 1e-6 * k.get(0, 1, 2, 2), "axis {axis}: {h}");
        }
    }

    #[test]
    fn protocol_realizes_the_coefficients() {
        let p = ModelParams::collinear(vec![1.0, 1.0], &[0.0, 2.0], vec![1.0; 2], 0.3, 1.0).unwrap();
        let model = linearized_td(&p, &dp_kernel(1.0, 0.3).unwrap(), &k2(1.0), &[2]).unwrap();
        let spec = model.build(4).unwrap();
        let lf = lindblad_form(&spec);
        // Σ_μ L_μ†L_μ over whitened channels carries γ'/4ħ² Σ a'² = 2 Σ D_ij x_i x_j
        let space = spec.space().unwrap();
        let x: Vec<_> = (0..2).map(|i| crate::hilbert::position_op(space, i).unwrap()).collect();
        let mut target = crate::hilbert::Operator::zeros(spec.dim());
        for i in 0..2 {
            for j in 0..2 {
                target = &target + &x[i].compose(&x[j]).scaled(2.0 * model.coefficients.decoherence[(i, j)]);
            }
        }
        let sum = lf.jump_ops.iter().fold(crate::hilbert::Operator::zeros(spec.dim()), |acc, l| &acc + &l.adjoint().compose(l));
        assert!(sum.distance(&target) < 1e-12 * target.max_abs());
    }
}
