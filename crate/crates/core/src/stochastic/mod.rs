//! Itô-level unraveling: weak measurements, records, Markovian feedback and
//! their combination into one stochastic Schrödinger step.

mod ensemble;
mod noise;
mod whitening;

pub use ensemble::{
    ensemble_density, simulate_ensemble, simulate_trajectory, snapshot_statistics, SimulationConfig, SseStepper,
    StepWorkspace, Trajectory, TrajectoryEnsemble,
};
pub use noise::{WienerBundle, WienerStream};
pub use whitening::{whiten_correlated_channels, Whitening};

use crate::error::{Error, Result};
use crate::hilbert::{self, HilbertSpec, Operator, StateVector};
use crate::linalg::{C64, ONE};
use crate::prelude::*;
use nalgebra::DMatrix;

/// Continuous weak measurement of a Hermitian observable at information rate `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementChannel {
    op: Operator,
    gamma: f64,
}

impl MeasurementChannel {
    pub fn new(op: Operator, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::NonPositiveRate(gamma));
        }
        if !op.is_hermitian(1e-12) {
            return Err(Error::NotHermitian("measured observable".into()));
        }
        Ok(Self { op, gamma })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Hermitian generator `b` of the feedback Hamiltonian `r b`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackChannel {
    op: Operator,
}

impl FeedbackChannel {
    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_hermitian(1e-12) {
            return Err(Error::NotHermitian("feedback generator".into()));
        }
        Ok(Self { op })
    }

    /// Measurement without feedback.
    pub fn none(dim: usize) -> Self {
        Self { op: Operator::zeros(dim) }
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn is_zero(&self) -> bool {
        self.op.max_abs() == 0.0
    }
}

/// A measured channel together with the feedback driven by its record.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub measurement: MeasurementChannel,
    pub feedback: FeedbackChannel,
}

impl Channel {
    pub fn new(measurement: MeasurementChannel, feedback: FeedbackChannel) -> Self {
        Self { measurement, feedback }
    }
}

/// Free Hamiltonian plus measurement/feedback channels; the common container
/// for every model.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSpec {
    h0: Operator,
    channels: Vec<Channel>,
    hbar: f64,
    label: String,
    correlation: Option<DMatrix<f64>>,
    noise_mixing: Option<DMatrix<f64>>,
    space: Option<HilbertSpec>,
}

impl ProtocolSpec {
    pub fn new(h0: Operator, channels: Vec<Channel>, hbar: f64, label: impl Into<String>) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        if !h0.is_hermitian(1e-12) {
            return Err(Error::NotHermitian("free Hamiltonian".into()));
        }
        let dim = h0.dim();
        for ch in &channels {
            for d in [ch.measurement.op.dim(), ch.feedback.op.dim()] {
                if d != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: d });
                }
            }
        }
        Ok(Self { h0, channels, hbar, label: label.into(), correlation: None, noise_mixing: None, space: None })
    }

    /// Protocol whose raw channels `raw_ops` carry noise correlated by `gamma`
    /// (`E[dξ_i dξ_j] = Γ_ij dt`); the raw feedback Hamiltonian is
    /// `Σ_i r_i B_i`. Channels are whitened once here.
    pub fn correlated(
        h0: Operator,
        raw_ops: &[Operator],
        raw_feedback: &[Operator],
        gamma: &DMatrix<f64>,
        hbar: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let w = whiten_correlated_channels(raw_ops, gamma)?;
        let feedback = w.feedback_channels(raw_feedback)?;
        let channels = w.channels().iter().cloned().zip(feedback).map(|(m, f)| Channel::new(m, f)).collect();
        let mut p = Self::new(h0, channels, hbar, label)?;
        p.correlation = Some(gamma.clone());
        p.noise_mixing = Some(w.factor().clone());
        Ok(p)
    }

    /// Attaches the Hilbert space so that truncation leakage can be monitored.
    pub fn with_space(mut self, space: HilbertSpec) -> Result<Self> {
        if space.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: space.dim() });
        }
        self.space = Some(space);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Raw-channel correlator Γ, if the protocol was built from correlated noise.
    pub fn correlation(&self) -> Option<&DMatrix<f64>> {
        self.correlation.as_ref()
    }

    /// Factor `L` with `Γ = L Lᵀ`, mapping white increments to raw ones.
    pub fn noise_mixing(&self) -> Option<&DMatrix<f64>> {
        self.noise_mixing.as_ref()
    }

    pub fn space(&self) -> Option<&HilbertSpec> {
        self.space.as_ref()
    }
}

fn check_state(psi: &StateVector, dim: usize) -> Result<()> {
    if psi.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi.dim() });
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(dt));
    }
    Ok(())
}

/// `(a − ⟨a⟩)ψ` and `⟨a⟩`.
fn centered(op: &Operator, psi: &[C64]) -> (Vec<C64>, f64) {
    let mut v = op.apply(psi);
    let mean: f64 = v.iter().zip(psi).map(|(a, p)| (p.conj() * a).re).sum();
    v.iter_mut().zip(psi).for_each(|(a, p)| *a -= p * mean);
    (v, mean)
}

/// `{−(γ/8ħ²)(a−⟨a⟩)² dt + (√γ/2ħ)(a−⟨a⟩) dW} ψ`.
pub fn measurement_increment(
    psi: &StateVector,
    ch: &MeasurementChannel,
    dw: f64,
    dt: f64,
    hbar: f64,
) -> Result<Vec<C64>> {
    check_state(psi, ch.op.dim())?;
    check_dt(dt)?;
    let (v, mean) = centered(&ch.op, psi.amplitudes());
    let mut w = ch.op.apply(&v);
    w.iter_mut().zip(&v).for_each(|(a, b)| *a -= b * mean);
    let g = ch.gamma;
    let cd = -g / (8.0 * hbar * hbar) * dt;
    let cn = g.sqrt() / (2.0 * hbar) * dw;
    Ok(w.iter().zip(&v).map(|(w, v)| w * cd + v * cn).collect())
}

/// `r = ⟨a⟩ + (ħ/√γ) dW/dt`.
pub fn record(psi: &StateVector, ch: &MeasurementChannel, dw: f64, dt: f64, hbar: f64) -> Result<f64> {
    check_state(psi, ch.op.dim())?;
    check_dt(dt)?;
    Ok(psi.expect(&ch.op) + hbar / ch.gamma.sqrt() * dw / dt)
}

/// `{[−(i/ħ)⟨a⟩ b − (1/2γ) b²] dt − (i/√γ) b dW} ψ`.
pub fn feedback_increment(
    psi: &StateVector,
    mch: &MeasurementChannel,
    fch: &FeedbackChannel,
    dw: f64,
    dt: f64,
    hbar: f64,
) -> Result<Vec<C64>> {
    check_state(psi, mch.op.dim())?;
    check_state(psi, fch.op.dim())?;
    check_dt(dt)?;
    let mean = psi.expect(&mch.op);
    let bpsi = fch.op.apply(psi.amplitudes());
    let bbpsi = fch.op.apply(&bpsi);
    let g = mch.gamma;
    let c1 = C64::new(0.0, -mean * dt / hbar - dw / g.sqrt());
    let c2 = -dt / (2.0 * g);
    Ok(bpsi.iter().zip(&bbpsi).map(|(b, bb)| b * c1 + bb * c2).collect())
}

/// Itô cross term `−(i/2ħ) b (a − ⟨a⟩) ψ dt`.
pub fn cross_increment(
    psi: &StateVector,
    mch: &MeasurementChannel,
    fch: &FeedbackChannel,
    dt: f64,
    hbar: f64,
) -> Result<Vec<C64>> {
    check_state(psi, mch.op.dim())?;
    check_dt(dt)?;
    let (v, _) = centered(&mch.op, psi.amplitudes());
    let c = C64::new(0.0, -dt / (2.0 * hbar));
    Ok(fch.op.apply(&v).into_iter().map(|x| x * c).collect())
}

/// Unnormalized increment `dψ` of one combined step.
pub fn combined_increment(psi: &StateVector, protocol: &ProtocolSpec, dws: &[f64], dt: f64) -> Result<Vec<C64>> {
    check_state(psi, protocol.dim())?;
    check_dt(dt)?;
    if dws.len() != protocol.n_channels() {
        return Err(Error::DimensionMismatch { expected: protocol.n_channels(), found: dws.len() });
    }
    let hbar = protocol.hbar;
    let mut d = protocol.h0.apply(psi.amplitudes());
    let c = C64::new(0.0, -dt / hbar);
    d.iter_mut().for_each(|x| *x *= c);
    for (ch, &dw) in protocol.channels.iter().zip(dws) {
        let m = measurement_increment(psi, &ch.measurement, dw, dt, hbar)?;
        let f = feedback_increment(psi, &ch.measurement, &ch.feedback, dw, dt, hbar)?;
        let x = cross_increment(psi, &ch.measurement, &ch.feedback, dt, hbar)?;
        for (i, di) in d.iter_mut().enumerate() {
            *di += m[i] + f[i] + x[i];
        }
    }
    Ok(d)
}

/// One Euler–Maruyama step of the combined measurement-feedback SSE followed
/// by renormalization.
pub fn combined_step(psi: &StateVector, protocol: &ProtocolSpec, dws: &[f64], dt: f64) -> Result<StateVector> {
    let d = combined_increment(psi, protocol, dws, dt)?;
    let next: Vec<C64> = psi.amplitudes().iter().zip(&d).map(|(p, d)| p + d).collect();
    let norm = hilbert::norm(&next);
    if !(norm >= 0.5) {
        return Err(Error::NormCollapse { norm, step: 0 });
    }
    let inv = ONE / norm;
    Ok(StateVector::from_normalized(next.into_iter().map(|x| x * inv).collect()))
}
