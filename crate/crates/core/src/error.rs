use crate::prelude::*;
use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),
    #[error("total dimension {dim} exceeds the configured maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("mode {0} has zero trap frequency and no explicit length scale")]
    MissingLengthScale(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operator `{0}` is not Hermitian")]
    NotHermitian(String),
    #[error("information rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("time step must be positive and divide the horizon, got dt = {0}")]
    InvalidTimeStep(f64),
    #[error("state norm fell to {norm:.3e} at step {step}; reduce dt")]
    NormCollapse { norm: f64, step: usize },
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPositiveSemidefinite(f64),
    #[error("matrix is not symmetric (defect {0:.3e})")]
    NotSymmetric(f64),
    #[error("time {0} is not on the stored grid")]
    OffGrid(f64),
    #[error("density matrix lost positivity: eigenvalue {min_eigenvalue:.3e} at t = {t}")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },
    #[error("invalid density operator: {0}")]
    InvalidDensity(String),
    #[error("unsupported by the moment oracle: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("particles {0} and {1} share an equilibrium position")]
    CoincidentPositions(usize, usize),
    #[error("rates violate the required symmetry: {0}")]
    RateSymmetry(String),
    #[error("kernel profile vanishes or changes sign near k = {0:.3e}")]
    ZeroCrossing(f64),
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("declared asymptotics disagree with the profile: {0}")]
    AsymptoticMismatch(String),
}

/// Non-fatal diagnostics attached to results.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Population of the top Fock level of `mode` exceeded the threshold.
    TruncationLeakage { mode: usize, population: f64, t: f64 },
    /// `dt` times the generator scale exceeds the recommended 0.1.
    StepSize { dt: f64, scale: f64 },
    /// Accumulated trace drift of a deterministic integration.
    TraceDrift { drift: f64 },
}

impl core::fmt::Display for Warning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Warning::TruncationLeakage { mode, population, t } => write!(
                f,
                "top Fock level of mode {mode} holds population {population:.3e} at t = {t}"
            ),
            Warning::StepSize { dt, scale } => {
                write!(f, "dt = {dt} with generator scale {scale:.3e} exceeds dt*scale = 0.1")
            }
            Warning::TraceDrift { drift } => write!(f, "trace drifted by {drift:.3e}"),
        }
    }
}
