use crate::error::{Error, Result};
use crate::hilbert::{momentum_op, position_op, HilbertSpec, Operator};
use crate::linalg::{CsrMatrix, C64, ONE};
use crate::ode::{dopri5, OdeTolerance};
use crate::prelude::*;
use crate::stochastic::ProtocolSpec;
use nalgebra::{DMatrix, DVector};

use super::lindblad_form;

/// Quadrature operators ordered `(x₀, p₀, x₁, p₁, …)`.
#[derive(Clone, Debug)]
pub struct PhaseSpace {
    ops: Vec<Operator>,
    hbar: f64,
}

impl PhaseSpace {
    pub fn new(spec: &HilbertSpec) -> Result<Self> {
        let mut ops = Vec::with_capacity(2 * spec.n_modes());
        for k in 0..spec.n_modes() {
            ops.push(position_op(spec, k)?);
            ops.push(momentum_op(spec, k)?);
        }
        Ok(Self { ops, hbar: spec.hbar() })
    }

    /// Number of quadratures, twice the number of modes.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Symplectic form `J = ⊕ [[0, 1], [−1, 0]]`.
    pub fn symplectic(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |a, b| match (a % 2, b) {
            (0, b) if b == a + 1 => 1.0,
            (1, b) if b + 1 == a => -1.0,
            _ => 0.0,
        })
    }
}

/// First and second moments of the quadratures.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    /// Symmetrized covariance `½⟨{ΔR_a, ΔR_b}⟩`.
    pub cov: DMatrix<f64>,
}

impl Moments {
    pub fn mean_x(&self, mode: usize) -> f64 {
        self.mean[2 * mode]
    }

    pub fn mean_p(&self, mode: usize) -> f64 {
        self.mean[2 * mode + 1]
    }

    /// Largest deviation relative to `max(|value|, floor)`, entrywise.
    pub fn relative_error(&self, reference: &Self, floor: f64) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(floor);
        let m = self.mean.iter().zip(reference.mean.iter()).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        let c = self.cov.iter().zip(reference.cov.iter()).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        m.max(c)
    }

    fn pack(&self) -> Vec<f64> {
        self.mean.iter().chain(self.cov.iter()).copied().collect()
    }

    fn unpack(n: usize, y: &[f64]) -> Self {
        Self { mean: DVector::from_column_slice(&y[..n]), cov: DMatrix::from_column_slice(n, n, &y[n..]) }
    }
}

/// Moments of a density matrix.
pub fn moments_of(rho: &DMatrix<C64>, phase: &PhaseSpace) -> Moments {
    let n = phase.len();
    let mean = DVector::from_iterator(n, phase.ops.iter().map(|r| r.expectation_in(rho).re));
    let mut cov = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = phase.ops[a].compose(&phase.ops[b]).expectation_in(rho).re - mean[a] * mean[b];
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Moments { mean, cov }
}

/// Closed linear equations `d⟨R⟩/dt = A⟨R⟩ + c`, `dV/dt = AV + VAᵀ + D`
/// for a quadratic Hamiltonian and linear jump operators.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentOracle {
    pub drift: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub diffusion: DMatrix<f64>,
    /// Quadratic form of `H_eff = ½ Rᵀ H R + hᵀ R + const`.
    pub hamiltonian: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl MomentOracle {
    /// Time derivative of the packed moments.
    pub fn derivative(&self, m: &Moments) -> Moments {
        let mean = &self.drift * &m.mean + &self.offset;
        let av = &self.drift * &m.cov;
        let cov = &av + av.transpose() + &self.diffusion;
        Moments { mean, cov }
    }

    /// Moments at time `t` from `initial` at time zero.
    pub fn solve(&self, initial: &Moments, t: f64) -> Result<Moments> {
        let n = self.drift.nrows();
        let y = dopri5(
            |_, y, dy| {
                let d = self.derivative(&Moments::unpack(n, y));
                for (o, v) in dy.iter_mut().zip(d.mean.iter().chain(d.cov.iter())) {
                    *o = *v;
                }
            },
            0.0,
            &initial.pack(),
            t,
            OdeTolerance::default(),
        )?;
        Ok(Moments::unpack(n, &y))
    }

    /// Moments at each of `times` (ascending, starting after zero).
    pub fn solve_at(&self, initial: &Moments, times: &[f64]) -> Result<Vec<Moments>> {
        let mut out = Vec::with_capacity(times.len());
        let mut cur = initial.clone();
        let mut t0 = 0.0;
        for &t in times {
            let n = self.drift.nrows();
            let y = dopri5(
                |_, y, dy| {
                    let d = self.derivative(&Moments::unpack(n, y));
                    for (o, v) in dy.iter_mut().zip(d.mean.iter().chain(d.cov.iter())) {
                        *o = *v;
                    }
                },
                t0,
                &cur.pack(),
                t,
                OdeTolerance::default(),
            )?;
            cur = Moments::unpack(n, &y);
            t0 = t;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

struct Projection {
    coeffs: Vec<C64>,
    residual: f64,
}

fn project(target: &CsrMatrix, basis: &[CsrMatrix]) -> Result<Projection> {
    let k = basis.len();
    let gram = DMatrix::from_fn(k, k, |i, j| basis[i].hs_inner(&basis[j]));
    let rhs = DVector::from_fn(k, |i, _| basis[i].hs_inner(target));
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::Unsupported("quadrature monomials are linearly dependent at this truncation".into()));
    }
    let c = svd.solve(&rhs, 0.0).map_err(|e| Error::Unsupported(e.into()))?;
    let coeffs: Vec<C64> = c.iter().copied().collect();
    let fit = basis.iter().zip(&coeffs).fold(CsrMatrix::zeros(target.dim()), |acc, (b, c)| acc.add_scaled(b, *c));
    let diff = target.add_scaled(&fit, -ONE);
    let norm = target.hs_inner(target).re.sqrt();
    let residual = diff.hs_inner(&diff).re.sqrt() / norm.max(f64::MIN_POSITIVE);
    Ok(Projection { coeffs, residual })
}

const RESIDUAL_TOL: f64 = 1e-9;

/// Builds the Gaussian-moment equations of `p` on the quadratures `phase`.
///
/// The effective Hamiltonian must be quadratic and every jump operator
/// linear (without a constant part) in the quadratures; otherwise the
/// moment hierarchy does not close and `Unsupported` is returned.
pub fn moment_oracle(p: &ProtocolSpec, phase: &PhaseSpace) -> Result<MomentOracle> {
    let n = phase.len();
    let dim = p.dim();
    if phase.ops.first().map(|o| o.dim()) != Some(dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: phase.ops.first().map_or(0, |o| o.dim()) });
    }
    let hbar = p.hbar();
    let r: Vec<&CsrMatrix> = phase.ops.iter().map(|o| o.matrix()).collect();
    let identity = CsrMatrix::identity(dim);

    let mut basis = Vec::new();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a..n {
            let ab = r[a].matmul(r[b]);
            let ba = r[b].matmul(r[a]);
            basis.push(ab.add_scaled(&ba, ONE).scale(C64::new(0.5, 0.0)));
            pairs.push((a, b));
        }
    }
    let n_quad = basis.len();
    basis.extend(r.iter().map(|m| (*m).clone()));
    basis.push(identity.clone());

    let lf = lindblad_form(p);
    let hp = project(lf.h_eff.matrix(), &basis)?;
    if hp.residual > RESIDUAL_TOL {
        return Err(Error::Unsupported(format!("effective Hamiltonian is not quadratic (residual {:.3e})", hp.residual)));
    }
    let mut h = DMatrix::zeros(n, n);
    for (&(a, b), c) in pairs.iter().zip(&hp.coeffs) {
        if a == b {
            h[(a, a)] = 2.0 * c.re;
        } else {
            h[(a, b)] = c.re;
            h[(b, a)] = c.re;
        }
    }
    let lin = DVector::from_iterator(n, hp.coeffs[n_quad..n_quad + n].iter().map(|c| c.re));

    let mut lin_basis: Vec<CsrMatrix> = r.iter().map(|m| (*m).clone()).collect();
    lin_basis.push(identity);
    let mut c_re = DMatrix::zeros(n, n);
    let mut c_im = DMatrix::zeros(n, n);
    for l in &lf.jump_ops {
        let lp = project(l.matrix(), &lin_basis)?;
        let scale = l.max_abs().max(f64::MIN_POSITIVE);
        if lp.residual > RESIDUAL_TOL || lp.coeffs[n].norm() > RESIDUAL_TOL * scale {
            return Err(Error::Unsupported("jump operator is not linear in the quadratures".into()));
        }
        for a in 0..n {
            for b in 0..n {
                let cab = lp.coeffs[a] * lp.coeffs[b].conj();
                c_re[(a, b)] += cab.re;
                c_im[(a, b)] += cab.im;
            }
        }
    }
    let j = phase.symplectic();
    let drift = &j * (&h - &c_im * hbar);
    let offset = &j * &lin;
    let diffusion = (&j * &c_re * j.transpose()) * (hbar * hbar);
    Ok(MomentOracle { drift, offset, diffusion, hamiltonian: h, linear: lin })
}
