//! Deterministic evolution of the ensemble state under measurement and
//! feedback.

mod moments;

pub use moments::{moment_oracle, moments_of, MomentOracle, Moments, PhaseSpace};

use crate::error::{Error, Result, Warning};
use crate::hilbert::{DensityOperator, Operator};
use crate::linalg::{self, CsrMatrix, C64, ONE};
use crate::prelude::*;
use crate::stochastic::ProtocolSpec;
use nalgebra::DMatrix;

struct ChannelTerms {
    a: CsrMatrix,
    b: Option<CsrMatrix>,
    gamma: f64,
}

/// The M-channel measurement-feedback generator
/// `−(i/ħ)[H0,ρ] + Σ{−(i/2ħ)[b,{a,ρ}] − (γ/8ħ²)[a,[a,ρ]] − (1/2γ)[b,[b,ρ]]}`,
/// with operators cached in sparse form.
pub struct MasterRhs {
    h0: CsrMatrix,
    channels: Vec<ChannelTerms>,
    hbar: f64,
    dim: usize,
}

impl MasterRhs {
    pub fn new(p: &ProtocolSpec) -> Self {
        let channels = p
            .channels()
            .iter()
            .map(|ch| ChannelTerms {
                a: ch.measurement.op().matrix().clone(),
                b: (!ch.feedback.is_zero()).then(|| ch.feedback.op().matrix().clone()),
                gamma: ch.measurement.gamma(),
            })
            .collect();
        Self { h0: p.h0().matrix().clone(), channels, hbar: p.hbar(), dim: p.dim() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the generator applied to `rho` into `out`; `scratch` holds three
    /// dim×dim buffers.
    pub fn apply_into(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, scratch: &mut [DMatrix<C64>; 3]) {
        let hbar = self.hbar;
        out.fill(linalg::ZERO);
        let ih = C64::new(0.0, 1.0 / hbar);
        self.h0.left_mul_acc(-ih, rho, out);
        self.h0.right_mul_acc(ih, rho, out);
        let [anti, comm, inner] = scratch;
        for ch in &self.channels {
            anti.fill(linalg::ZERO);
            comm.fill(linalg::ZERO);
            ch.a.left_mul_acc(ONE, rho, anti);
            ch.a.right_mul_acc(ONE, rho, anti);
            ch.a.left_mul_acc(ONE, rho, comm);
            ch.a.right_mul_acc(-ONE, rho, comm);
            let cm = C64::new(-ch.gamma / (8.0 * hbar * hbar), 0.0);
            ch.a.left_mul_acc(cm, comm, out);
            ch.a.right_mul_acc(-cm, comm, out);
            if let Some(b) = &ch.b {
                let cx = C64::new(0.0, -1.0 / (2.0 * hbar));
                b.left_mul_acc(cx, anti, out);
                b.right_mul_acc(-cx, anti, out);
                inner.fill(linalg::ZERO);
                b.left_mul_acc(ONE, rho, inner);
                b.right_mul_acc(-ONE, rho, inner);
                let cf = C64::new(-1.0 / (2.0 * ch.gamma), 0.0);
                b.left_mul_acc(cf, inner, out);
                b.right_mul_acc(-cf, inner, out);
            }
        }
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = linalg::zeros(self.dim);
        let mut scratch = [linalg::zeros(self.dim), linalg::zeros(self.dim), linalg::zeros(self.dim)];
        self.apply_into(rho, &mut out, &mut scratch);
        out
    }

    /// Upper bound on the generator's norm from operator row norms.
    pub fn scale(&self) -> f64 {
        let hbar = self.hbar;
        let mut s = 2.0 * self.h0.row_norm() / hbar;
        for ch in &self.channels {
            let na = ch.a.row_norm();
            s += ch.gamma / (2.0 * hbar * hbar) * na * na;
            if let Some(b) = &ch.b {
                let nb = b.row_norm();
                s += 2.0 * nb * na / hbar + 2.0 * nb * nb / ch.gamma;
            }
        }
        s
    }
}

/// Applies the master-equation generator of `p` to `rho`.
pub fn rhs(rho: &DMatrix<C64>, p: &ProtocolSpec) -> Result<DMatrix<C64>> {
    if rho.nrows() != p.dim() || rho.ncols() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: rho.nrows() });
    }
    Ok(MasterRhs::new(p).apply(rho))
}

/// Lindblad repackaging `H_eff = H0 + Σ ¼{a,b}`, `L = (√γ/2ħ)a − (i/√γ)b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladForm {
    pub h_eff: Operator,
    pub jump_ops: Vec<Operator>,
    pub hbar: f64,
}

impl LindbladForm {
    /// `−(i/ħ)[H_eff,ρ] + Σ (LρL† − ½{L†L,ρ})`.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = rho.nrows();
        let mut out = linalg::zeros(n);
        let ih = C64::new(0.0, 1.0 / self.hbar);
        let h = self.h_eff.matrix();
        h.left_mul_acc(-ih, rho, &mut out);
        h.right_mul_acc(ih, rho, &mut out);
        let half = C64::new(-0.5, 0.0);
        for l in &self.jump_ops {
            let lm = l.matrix();
            let ld = lm.adjoint();
            let ldl = ld.matmul(lm);
            let mut lr = linalg::zeros(n);
            lm.left_mul_acc(ONE, rho, &mut lr);
            ld.right_mul_acc(ONE, &lr, &mut out);
            ldl.left_mul_acc(half, rho, &mut out);
            ldl.right_mul_acc(half, rho, &mut out);
        }
        out
    }
}

pub fn lindblad_form(p: &ProtocolSpec) -> LindbladForm {
    let hbar = p.hbar();
    let mut h_eff = p.h0().clone();
    let mut jump_ops = Vec::with_capacity(p.n_channels());
    for ch in p.channels() {
        let a = ch.measurement.op();
        let b = ch.feedback.op();
        let g = ch.measurement.gamma();
        h_eff = &h_eff + &a.anticommutator(b).scaled(0.25);
        let l = &a.scaled(g.sqrt() / (2.0 * hbar)) + &b.scaled_complex(C64::new(0.0, -1.0 / g.sqrt()));
        jump_ops.push(l);
    }
    LindbladForm { h_eff, jump_ops, hbar }
}

/// Sampling policy of [`integrate`].
#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Store ρ every this many steps (the final state is always stored).
    pub store_every: usize,
    /// Eigenvalue floor checked at stored states.
    pub positivity_floor: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { store_every: 1, positivity_floor: -1e-6 }
    }
}

/// Sampled solution of the master equation.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterSolution {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<C64>>,
    /// Largest |Tr ρ − 1| seen at stored states; logged, never corrected.
    pub trace_drift: f64,
    pub warnings: Vec<Warning>,
}

impl MasterSolution {
    pub fn final_state(&self) -> DensityOperator {
        DensityOperator::from_unchecked(self.states.last().cloned().expect("solution has at least one state"))
    }

    /// Stored state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<DensityOperator> {
        let dt = self.times.get(1).map(|t1| t1 - self.times[0]).unwrap_or(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * dt.max(t.abs()))
            .map(|k| DensityOperator::from_unchecked(self.states[k].clone()))
            .ok_or(Error::OffGrid(t))
    }
}

/// Fixed-step classical RK4 on the density matrix.
fn axpy(y: &mut DMatrix<C64>, a: f64, x: &DMatrix<C64>) {
    y.iter_mut().zip(x.iter()).for_each(|(y, x)| *y += x * a);
}

pub fn integrate(
    rho0: &DensityOperator,
    p: &ProtocolSpec,
    dt: f64,
    t_final: f64,
    opts: &IntegrateOptions,
) -> Result<MasterSolution> {
    let dim = p.dim();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: rho0.dim() });
    }
    if !(dt > 0.0) || !dt.is_finite() || !(t_final > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let n = (t_final / dt).round();
    if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::InvalidTimeStep(dt));
    }
    let n = n as usize;
    let gen = MasterRhs::new(p);
    let mut warnings = Vec::new();
    if gen.scale() * dt > 0.1 {
        warnings.push(Warning::StepSize { dt, scale: gen.scale() });
    }
    let every = opts.store_every.max(1);
    let mut rho = rho0.matrix().clone();
    let mut times = vec![0.0];
    let mut states = vec![rho.clone()];
    let mut trace_drift: f64 = 0.0;
    let mut scratch = [linalg::zeros(dim), linalg::zeros(dim), linalg::zeros(dim)];
    let (mut k1, mut k2, mut k3, mut k4) = (linalg::zeros(dim), linalg::zeros(dim), linalg::zeros(dim), linalg::zeros(dim));
    let mut stage = linalg::zeros(dim);
    let h = dt;
    for step in 1..=n {
        gen.apply_into(&rho, &mut k1, &mut scratch);
        stage.copy_from(&rho);
        axpy(&mut stage, h * 0.5, &k1);
        gen.apply_into(&stage, &mut k2, &mut scratch);
        stage.copy_from(&rho);
        axpy(&mut stage, h * 0.5, &k2);
        gen.apply_into(&stage, &mut k3, &mut scratch);
        stage.copy_from(&rho);
        axpy(&mut stage, h, &k3);
        gen.apply_into(&stage, &mut k4, &mut scratch);
        axpy(&mut rho, h / 6.0, &k1);
        axpy(&mut rho, h / 3.0, &k2);
        axpy(&mut rho, h / 3.0, &k3);
        axpy(&mut rho, h / 6.0, &k4);
        if step % every == 0 || step == n {
            let t = step as f64 * dt;
            trace_drift = trace_drift.max((linalg::trace(&rho) - ONE).norm());
            let min = linalg::min_eigenvalue(&rho);
            if min < opts.positivity_floor {
                return Err(Error::PositivityViolation { t, min_eigenvalue: min });
            }
            times.push(t);
            states.push(rho.clone());
        }
    }
    if trace_drift > 1e-9 {
        warnings.push(Warning::TraceDrift { drift: trace_drift });
    }
    Ok(MasterSolution { times, states, trace_drift, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{free_hamiltonian, position_op, HilbertSpec, Mode, StateVector};
    use crate::stochastic::{Channel, FeedbackChannel, MeasurementChannel};

    fn measured_oscillator(m: usize, gamma: f64) -> (HilbertSpec, ProtocolSpec) {
        let spec = HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0)], m, 1.0).unwrap();
        let x = position_op(&spec, 0).unwrap();
        let ch = Channel::new(MeasurementChannel::new(x, gamma).unwrap(), FeedbackChannel::none(m));
        let p = ProtocolSpec::new(free_hamiltonian(&spec).unwrap(), vec![ch], 1.0, "measured").unwrap();
        (spec, p)
    }

    #[test]
    fn measurement_only_generator_is_decoherence_form() {
        let (spec, p) = measured_oscillator(6, 0.3);
        let rho = StateVector::coherent(&spec, &[C64::new(0.4, 0.2)]).unwrap().projector();
        let x = position_op(&spec, 0).unwrap().to_dense();
        let h = p.h0().to_dense();
        let i = C64::new(0.0, 1.0);
        let comm = |a: &DMatrix<C64>, b: &DMatrix<C64>| a * b - b * a;
        let expected = (comm(&h, &rho) * -i) - comm(&x, &comm(&x, &rho)) * C64::new(0.3 / 8.0, 0.0);
        assert!(linalg::max_abs(&(rhs(&rho, &p).unwrap() - expected)) < 1e-14);
    }

    #[test]
    fn trace_of_generator_vanishes_on_identity() {
        let (_, p) = measured_oscillator(5, 0.7);
        let id = DensityOperator::maximally_mixed(5);
        assert!(linalg::trace(&rhs(id.matrix(), &p).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn unitary_evolution_conserves_energy() {
        let spec = HilbertSpec::uniform(vec![Mode::harmonic(1.0, 1.0)], 14, 1.0).unwrap();
        let p = ProtocolSpec::new(free_hamiltonian(&spec).unwrap(), vec![], 1.0, "free").unwrap();
        let rho0 = DensityOperator::from_pure(&StateVector::coherent(&spec, &[C64::new(1.0, 0.0)]).unwrap());
        let e0 = rho0.expect(p.h0());
        let sol = integrate(&rho0, &p, 1e-2, 10.0, &IntegrateOptions { store_every: 100, ..Default::default() }).unwrap();
        for s in &sol.states {
            let e = DensityOperator::from_unchecked(s.clone()).expect(p.h0());
            assert!((e - e0).abs() < 1e-9, "energy drift {}", e - e0);
        }
    }

    #[test]
    fn measurement_only_purity_never_increases() {
        let (spec, p) = measured_oscillator(8, 0.8);
        let rho0 = DensityOperator::from_pure(&StateVector::coherent(&spec, &[C64::new(0.6, -0.2)]).unwrap());
        let sol = integrate(&rho0, &p, 1e-3, 0.5, &IntegrateOptions::default()).unwrap();
        let purities: Vec<f64> = sol.states.iter().map(|s| s.iter().map(|v| v.norm_sqr()).sum()).collect();
        assert!(purities.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(purities.last().unwrap() < &(purities[0] - 1e-3));
    }

    #[test]
    fn rk4_error_ratio_under_step_halving() {
        let (spec, p) = measured_oscillator(6, 0.5);
        let rho0 = DensityOperator::from_pure(&StateVector::coherent(&spec, &[C64::new(0.5, 0.0)]).unwrap());
        let opts = IntegrateOptions { store_every: usize::MAX, ..Default::default() };
        let run = |dt: f64| integrate(&rho0, &p, dt, 1.0, &opts).unwrap().final_state().into_matrix();
        let reference = run(1e-3);
        let e1 = linalg::max_abs(&(run(0.1) - &reference));
        let e2 = linalg::max_abs(&(run(0.05) - &reference));
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lindblad_form_without_feedback() {
        let (_, p) = measured_oscillator(4, 0.6);
        let lf = lindblad_form(&p);
        assert!(lf.h_eff.distance(p.h0()) < 1e-15);
        assert!(lf.jump_ops[0].is_hermitian(1e-14));
    }

    #[test]
    fn off_grid_time_is_rejected() {
        let (spec, p) = measured_oscillator(4, 0.6);
        let rho0 = DensityOperator::from_pure(&StateVector::ground(&spec));
        let sol = integrate(&rho0, &p, 0.1, 1.0, &IntegrateOptions { store_every: 2, ..Default::default() }).unwrap();
        assert!(sol.state_at(0.2).is_ok());
        assert!(matches!(sol.state_at(0.3), Err(Error::OffGrid(_))));
        assert!(integrate(&rho0, &p, 0.3, 1.0, &IntegrateOptions::default()).is_err());
    }
}
