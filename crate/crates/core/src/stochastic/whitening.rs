use super::{FeedbackChannel, MeasurementChannel};
use crate::error::{Error, Result};
use crate::hilbert::Operator;
use crate::linalg;
use crate::prelude::*;
use nalgebra::{Cholesky, DMatrix};

/// Correlated raw channels rewritten as independent unit-rate channels.
///
/// With `Γ = L Lᵀ` the raw increments are `dξ = L dW` for white `dW`, the
/// effective observables are `a'_μ = Σ_i L_iμ a_i`, and a raw feedback
/// `Σ_j r_j B_j` becomes `b'_μ = Σ_j (L⁺ᵀ)_jμ B_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Whitening {
    factor: DMatrix<f64>,
    feedback_map: DMatrix<f64>,
    channels: Vec<MeasurementChannel>,
}

impl Whitening {
    /// `L` (raw × effective).
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `L⁺ᵀ` (raw × effective).
    pub fn feedback_map(&self) -> &DMatrix<f64> {
        &self.feedback_map
    }

    pub fn channels(&self) -> &[MeasurementChannel] {
        &self.channels
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// Feedback generators of the effective channels.
    pub fn feedback_channels(&self, raw_feedback: &[Operator]) -> Result<Vec<FeedbackChannel>> {
        if raw_feedback.len() != self.factor.nrows() {
            return Err(Error::DimensionMismatch { expected: self.factor.nrows(), found: raw_feedback.len() });
        }
        (0..self.rank())
            .map(|mu| FeedbackChannel::new(combine(raw_feedback, self.feedback_map.column(mu).iter().copied())))
            .collect()
    }

    /// Raw correlated increments `L dW`.
    pub fn raw_noise(&self, dw: &[f64]) -> Vec<f64> {
        (0..self.factor.nrows()).map(|i| (0..self.rank()).map(|mu| self.factor[(i, mu)] * dw[mu]).sum()).collect()
    }
}

fn combine(ops: &[Operator], weights: impl Iterator<Item = f64>) -> Operator {
    let dim = ops.first().map(|o| o.dim()).unwrap_or(0);
    ops.iter().zip(weights).fold(Operator::zeros(dim), |acc, (op, w)| if w == 0.0 { acc } else { &acc + &op.scaled(w) })
}

/// Factors `Γ = L Lᵀ` and builds unit-rate channels with independent noises.
///
/// Diagonal Γ keeps the raw channels (scaled by `√Γ_ii`), a positive-definite
/// Γ uses its Cholesky factor, and a singular one its truncated spectral
/// factor, which drops the null directions.
pub fn whiten_correlated_channels(raw_ops: &[Operator], gamma: &DMatrix<f64>) -> Result<Whitening> {
    let n = raw_ops.len();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: gamma.nrows() });
    }
    let scale = gamma.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let asym = (gamma - gamma.transpose()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-10 * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let (values, vectors) = linalg::symmetric_eigen_desc(gamma);
    if let Some(&min) = values.last() {
        if min < -1e-10 {
            return Err(Error::NotPositiveSemidefinite(min));
        }
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || gamma[(i, j)] == 0.0));
    let cutoff = 1e-12 * values.first().copied().unwrap_or(0.0);
    let (factor, feedback_map) = if diagonal {
        let kept: Vec<usize> = (0..n).filter(|&i| gamma[(i, i)] > cutoff).collect();
        let l = DMatrix::from_fn(n, kept.len(), |i, mu| if i == kept[mu] { gamma[(i, i)].sqrt() } else { 0.0 });
        let m = DMatrix::from_fn(n, kept.len(), |i, mu| if i == kept[mu] { 1.0 / gamma[(i, i)].sqrt() } else { 0.0 });
        (l, m)
    } else if let Some(ch) = Cholesky::new(gamma.clone()).filter(|_| values.last().copied().unwrap_or(0.0) > cutoff) {
        let l = ch.l();
        let inv = l.clone().try_inverse().ok_or(Error::NotPositiveSemidefinite(0.0))?;
        (l, inv.transpose())
    } else {
        let kept: Vec<usize> = (0..n).filter(|&k| values[k] > cutoff).collect();
        let l = DMatrix::from_fn(n, kept.len(), |i, mu| vectors[(i, kept[mu])] * values[kept[mu]].sqrt());
        let m = DMatrix::from_fn(n, kept.len(), |i, mu| vectors[(i, kept[mu])] / values[kept[mu]].sqrt());
        (l, m)
    };
    let channels = (0..factor.ncols())
        .map(|mu| MeasurementChannel::new(combine(raw_ops, factor.column(mu).iter().copied()), 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Whitening { factor, feedback_map, channels })
}
