use super::{ProtocolSpec, WienerBundle};
use crate::error::{Error, Result, Warning};
use crate::hilbert::{self, DensityOperator, HilbertSpec, StateVector};
use crate::linalg::{self, CsrMatrix, C64, ONE, ZERO};
use crate::prelude::*;

/// Time grid, sampling and storage policy of an ensemble run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Store the state every this many steps (the final step is always stored).
    pub snapshot_every: usize,
    /// Keep per-step record increments `r dt`.
    pub store_records: bool,
}

impl SimulationConfig {
    pub fn new(dt: f64, t_final: f64, n_traj: usize, seed: u64) -> Self {
        Self { dt, t_final, n_traj, seed, snapshot_every: 1, store_records: true }
    }

    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() || !(self.t_final > 0.0) {
            return Err(Error::InvalidTimeStep(self.dt));
        }
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::InvalidTimeStep(self.dt));
        }
        Ok(n as usize)
    }

    pub fn snapshot_steps(&self) -> Result<Vec<usize>> {
        let n = self.n_steps()?;
        let every = self.snapshot_every.max(1);
        let mut steps: Vec<usize> = (0..=n).step_by(every).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        Ok(steps)
    }
}

/// Precompiled stepper for the combined SSE.
///
/// The state-independent parts of one step are folded into a single sparse
/// drift `−(i/ħ)H0 − Σ[(γ/8ħ²)a² + (1/2γ)b² + (i/2ħ)ba]`; the remaining
/// terms only need `aψ`, `bψ` and `⟨a⟩`.
#[derive(Clone, Debug)]
pub struct SseStepper {
    drift: CsrMatrix,
    a: Vec<CsrMatrix>,
    b: Vec<Option<CsrMatrix>>,
    gamma: Vec<f64>,
    hbar: f64,
    space: Option<HilbertSpec>,
    scale: f64,
}

/// Scratch buffers for [`SseStepper::step`].
pub struct StepWorkspace {
    apsi: Vec<Vec<C64>>,
    bpsi: Vec<Vec<C64>>,
    next: Vec<C64>,
}

impl SseStepper {
    pub fn new(protocol: &ProtocolSpec) -> Result<Self> {
        let hbar = protocol.hbar();
        let mut drift = protocol.h0().matrix().scale(C64::new(0.0, -1.0 / hbar));
        let mut scale = protocol.h0().matrix().row_norm() / hbar;
        let (mut a, mut b, mut gamma) = (Vec::new(), Vec::new(), Vec::new());
        for ch in protocol.channels() {
            let g = ch.measurement.gamma();
            let am = ch.measurement.op().matrix().clone();
            let na = am.row_norm();
            drift = drift.add_scaled(&am.matmul(&am), C64::new(-g / (8.0 * hbar * hbar), 0.0));
            scale += g / (8.0 * hbar * hbar) * na * na;
            if ch.feedback.is_zero() {
                b.push(None);
            } else {
                let bm = ch.feedback.op().matrix().clone();
                let nb = bm.row_norm();
                drift = drift.add_scaled(&bm.matmul(&bm), C64::new(-1.0 / (2.0 * g), 0.0));
                drift = drift.add_scaled(&bm.matmul(&am), C64::new(0.0, -1.0 / (2.0 * hbar)));
                scale += nb * nb / (2.0 * g) + na * nb / hbar;
                b.push(Some(bm));
            }
            a.push(am);
            gamma.push(g);
        }
        Ok(Self { drift, a, b, gamma, hbar, space: protocol.space().cloned(), scale })
    }

    pub fn n_channels(&self) -> usize {
        self.a.len()
    }

    /// Upper bound on the deterministic generator norm, used for the dt heuristic.
    pub fn generator_scale(&self) -> f64 {
        self.scale
    }

    pub fn workspace(&self) -> StepWorkspace {
        let dim = self.drift.dim();
        StepWorkspace {
            apsi: vec![vec![ZERO; dim]; self.a.len()],
            bpsi: vec![vec![ZERO; dim]; self.a.len()],
            next: vec![ZERO; dim],
        }
    }

    /// Advances `psi` by one step with increments `dw`, writing the record
    /// increments `r dt` into `records`. `step` only labels errors.
    pub fn step(
        &self,
        psi: &mut [C64],
        dw: &[f64],
        dt: f64,
        ws: &mut StepWorkspace,
        records: &mut [f64],
        step: usize,
    ) -> Result<()> {
        let hbar = self.hbar;
        ws.next.copy_from_slice(psi);
        self.drift.matvec_acc(C64::new(dt, 0.0), psi, &mut ws.next);
        for l in 0..self.a.len() {
            let g = self.gamma[l];
            let apsi = &mut ws.apsi[l];
            apsi.iter_mut().for_each(|x| *x = ZERO);
            self.a[l].matvec_acc(ONE, psi, apsi);
            let mean: f64 = apsi.iter().zip(psi.iter()).map(|(a, p)| (p.conj() * a).re).sum();
            records[l] = mean * dt + hbar / g.sqrt() * dw[l];
            let ca = g / (4.0 * hbar * hbar) * mean * dt + g.sqrt() / (2.0 * hbar) * dw[l];
            let cp = -g / (8.0 * hbar * hbar) * mean * mean * dt - g.sqrt() / (2.0 * hbar) * mean * dw[l];
            for ((n, a), p) in ws.next.iter_mut().zip(apsi.iter()).zip(psi.iter()) {
                *n += a * ca + p * cp;
            }
            if let Some(bm) = &self.b[l] {
                let cb = C64::new(0.0, -mean * dt / (2.0 * hbar) - dw[l] / g.sqrt());
                let bpsi = &mut ws.bpsi[l];
                bpsi.iter_mut().for_each(|x| *x = ZERO);
                bm.matvec_acc(ONE, psi, bpsi);
                for (n, b) in ws.next.iter_mut().zip(bpsi.iter()) {
                    *n += b * cb;
                }
            }
        }
        let norm = hilbert::norm(&ws.next);
        if !(norm >= 0.5) {
            return Err(Error::NormCollapse { norm, step });
        }
        let inv = 1.0 / norm;
        for (p, n) in psi.iter_mut().zip(&ws.next) {
            *p = n * inv;
        }
        Ok(())
    }
}

/// One unraveled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub index: usize,
    /// States at the ensemble's snapshot steps.
    pub snapshots: Vec<StateVector>,
    /// Per channel, the per-step record increments `r dt` (empty if not stored).
    pub records: Vec<Vec<f64>>,
    pub warnings: Vec<Warning>,
}

impl Trajectory {
    /// Running integral of the record of `channel`, one entry per step.
    pub fn integrated_record(&self, channel: usize) -> Vec<f64> {
        let mut acc = 0.0;
        self.records[channel].iter().map(|r| {
            acc += r;
            acc
        }).collect()
    }
}

/// Integrates trajectory `index` with the noise stream derived from `cfg.seed`.
pub fn simulate_trajectory(
    stepper: &SseStepper,
    psi0: &StateVector,
    cfg: &SimulationConfig,
    index: usize,
) -> Result<Trajectory> {
    if psi0.dim() != stepper.drift.dim() {
        return Err(Error::DimensionMismatch { expected: stepper.drift.dim(), found: psi0.dim() });
    }
    let n_steps = cfg.n_steps()?;
    let snaps = cfg.snapshot_steps()?;
    let nch = stepper.n_channels();
    let bundle = WienerBundle::new(nch, cfg.dt, cfg.seed)?;
    let mut noise = bundle.stream(index as u64);
    let mut ws = stepper.workspace();
    let mut psi = psi0.amplitudes().to_vec();
    let mut dw = vec![0.0; nch];
    let mut rec = vec![0.0; nch];
    let mut records = if cfg.store_records { vec![Vec::with_capacity(n_steps); nch] } else { Vec::new() };
    let mut snapshots = Vec::with_capacity(snaps.len());
    let mut leak: Vec<Option<Warning>> = Vec::new();
    let mut next_snap = 0;
    for step in 0..=n_steps {
        if next_snap < snaps.len() && snaps[next_snap] == step {
            let state = StateVector::from_normalized(psi.clone());
            if let Some(space) = &stepper.space {
                track_leakage(&mut leak, &state.top_level_populations(space), step as f64 * cfg.dt);
            }
            snapshots.push(state);
            next_snap += 1;
        }
        if step == n_steps {
            break;
        }
        noise.next_into(&mut dw);
        stepper.step(&mut psi, &dw, cfg.dt, &mut ws, &mut rec, step)?;
        if cfg.store_records {
            for (r, x) in records.iter_mut().zip(&rec) {
                r.push(*x);
            }
        }
    }
    Ok(Trajectory { index, snapshots, records, warnings: leak.into_iter().flatten().collect() })
}

/// Keeps, per mode, the largest leakage seen above threshold.
fn track_leakage(slots: &mut Vec<Option<Warning>>, pops: &[f64], t: f64) {
    if slots.len() < pops.len() {
        slots.resize(pops.len(), None);
    }
    for w in hilbert::leakage_warnings(pops, t) {
        if let Warning::TruncationLeakage { mode, population, .. } = w {
            let worse = match &slots[mode] {
                Some(Warning::TruncationLeakage { population: p, .. }) => population > *p,
                _ => true,
            };
            if worse {
                slots[mode] = Some(w);
            }
        }
    }
}

/// Seeded collection of trajectories sharing one time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub config: SimulationConfig,
    pub snapshot_steps: Vec<usize>,
    pub trajectories: Vec<Trajectory>,
    pub warnings: Vec<Warning>,
}

impl TrajectoryEnsemble {
    /// Assembles trajectories (in any order) into an ensemble sorted by index.
    pub fn from_trajectories(
        config: SimulationConfig,
        stepper: &SseStepper,
        mut trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        trajectories.sort_by_key(|t| t.index);
        let snapshot_steps = config.snapshot_steps()?;
        let mut warnings = Vec::new();
        if stepper.generator_scale() * config.dt > 0.1 {
            warnings.push(Warning::StepSize { dt: config.dt, scale: stepper.generator_scale() });
        }
        let mut leak: Vec<Option<Warning>> = Vec::new();
        for t in &trajectories {
            for w in &t.warnings {
                if let Warning::TruncationLeakage { mode, population, t } = *w {
                    let mut pops = vec![0.0; mode + 1];
                    pops[mode] = population;
                    track_leakage(&mut leak, &pops, t);
                }
            }
        }
        warnings.extend(leak.into_iter().flatten());
        Ok(Self { config, snapshot_steps, trajectories, warnings })
    }

    pub fn n_traj(&self) -> usize {
        self.trajectories.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&s| s as f64 * self.config.dt).collect()
    }

    /// Index into the snapshot grid of time `t`.
    pub fn snapshot_index(&self, t: f64) -> Result<usize> {
        let dt = self.config.dt;
        self.snapshot_steps
            .iter()
            .position(|&s| (s as f64 * dt - t).abs() <= 1e-9 * dt.max(t.abs()))
            .ok_or(Error::OffGrid(t))
    }

    /// Empirical density operator of the first `n` trajectories at time `t`.
    pub fn density_of_first(&self, t: f64, n: usize) -> Result<DensityOperator> {
        let k = self.snapshot_index(t)?;
        let n = n.min(self.trajectories.len());
        if n == 0 {
            return Err(Error::InvalidParameter("ensemble is empty".into()));
        }
        let dim = self.trajectories[0].snapshots[k].dim();
        let mut acc = linalg::zeros(dim);
        for traj in &self.trajectories[..n] {
            let psi = traj.snapshots[k].amplitudes();
            for c in 0..dim {
                let pc = psi[c].conj();
                for r in 0..=c {
                    acc[(r, c)] += psi[r] * pc;
                }
            }
        }
        let inv = 1.0 / n as f64;
        for c in 0..dim {
            for r in 0..c {
                let v = acc[(r, c)] * inv;
                acc[(r, c)] = v;
                acc[(c, r)] = v.conj();
            }
            acc[(c, c)] = C64::new(acc[(c, c)].re * inv, 0.0);
        }
        Ok(DensityOperator::from_unchecked(acc))
    }
}

/// Runs `cfg.n_traj` trajectories sequentially.
pub fn simulate_ensemble(protocol: &ProtocolSpec, psi0: &StateVector, cfg: &SimulationConfig) -> Result<TrajectoryEnsemble> {
    if cfg.n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let stepper = SseStepper::new(protocol)?;
    let trajectories =
        (0..cfg.n_traj).map(|i| simulate_trajectory(&stepper, psi0, cfg, i)).collect::<Result<Vec<_>>>()?;
    TrajectoryEnsemble::from_trajectories(cfg.clone(), &stepper, trajectories)
}

/// `(1/n) Σ |ψ_i⟩⟨ψ_i|` at snapshot time `t`.
pub fn ensemble_density(ens: &TrajectoryEnsemble, t: f64) -> Result<DensityOperator> {
    ens.density_of_first(t, ens.n_traj())
}

/// Average of `f(ψ)` over trajectories at snapshot `k`, with its standard error.
pub fn snapshot_statistics<F: Fn(&StateVector) -> f64>(ens: &TrajectoryEnsemble, k: usize, f: F) -> (f64, f64) {
    let n = ens.n_traj() as f64;
    let vals: Vec<f64> = ens.trajectories.iter().map(|t| f(&t.snapshots[k])).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}
