use super::LinearProtocol;
use crate::prelude::*;
use nalgebra::DMatrix;

/// Coefficient form of a master equation that is at most quadratic in the
/// coordinates `x_i`:
///
/// `dρ/dt = −(i/ħ)[H₀ + Σ H_ij x_i x_j, ρ] − Σ D_ij [x_i,[x_j,ρ]] − (i/2ħ) Σ A_ij x_i ρ x_j`.
///
/// `A` is antisymmetric and vanishes whenever the channel couplings are
/// reciprocal.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCoefficients {
    pub hamiltonian: DMatrix<f64>,
    pub decoherence: DMatrix<f64>,
    pub residual: DMatrix<f64>,
    /// Owning particle of each coordinate.
    pub particle: Vec<usize>,
    /// Cartesian axis (0..3) of each coordinate.
    pub axis: Vec<usize>,
}

impl LinearCoefficients {
    pub fn zeros(particle: Vec<usize>, axis: Vec<usize>) -> Self {
        let n = particle.len();
        Self {
            hamiltonian: DMatrix::zeros(n, n),
            decoherence: DMatrix::zeros(n, n),
            residual: DMatrix::zeros(n, n),
            particle,
            axis,
        }
    }

    pub fn len(&self) -> usize {
        self.particle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particle.is_empty()
    }

    pub fn label(&self, i: usize) -> String {
        format!("x{}{}", self.particle[i] + 1, ["x", "y", "z"][self.axis[i]])
    }

    /// Accumulates one channel `a = u·x`, `b = v·x` at rate γ.
    pub fn add_channel(&mut self, u: &[f64], v: &[f64], gamma: f64, hbar: f64) {
        let n = self.len();
        let dm = gamma / (8.0 * hbar * hbar);
        let df = 1.0 / (2.0 * gamma);
        for i in 0..n {
            for j in 0..n {
                self.hamiltonian[(i, j)] += 0.25 * (u[i] * v[j] + v[i] * u[j]);
                self.decoherence[(i, j)] += dm * u[i] * u[j] + df * v[i] * v[j];
                self.residual[(i, j)] += v[i] * u[j] - u[i] * v[j];
            }
        }
    }

    pub(super) fn from_channels(p: &LinearProtocol) -> Self {
        let n = p.n_coords();
        let na = p.axes.len();
        let particle = (0..n).map(|i| i / na).collect();
        let axis = (0..n).map(|i| p.axes[i % na]).collect();
        let mut c = Self::zeros(particle, axis);
        for ch in &p.channels {
            let mut u = vec![0.0; n];
            u[ch.measured] = 1.0;
            let mut v = vec![0.0; n];
            for &(j, k) in &ch.feedback {
                v[j] += k;
            }
            c.add_channel(&u, &v, ch.gamma, p.params.hbar);
        }
        c
    }

    /// Largest entry of the antisymmetric residual.
    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
