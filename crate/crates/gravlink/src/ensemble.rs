//! Multi-threaded trajectory ensembles.
//!
//! Each trajectory draws from its own counter-based noise stream, and the
//! ensemble is reassembled in index order, so results do not depend on the
//! thread count.

use gravlink_core::stochastic::{simulate_trajectory, SimulationConfig, SseStepper, TrajectoryEnsemble};
use gravlink_core::{Error, ProtocolSpec, Result, StateVector};
use rayon::prelude::*;

/// `--threads`, then `GRAVLINK_THREADS`, then the config value, then 1.
pub fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("GRAVLINK_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .or(config)
        .unwrap_or(1)
        .max(1)
}

pub fn simulate_parallel(protocol: &ProtocolSpec, psi0: &StateVector, cfg: &SimulationConfig, threads: usize) -> Result<TrajectoryEnsemble> {
    if cfg.n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let stepper = SseStepper::new(protocol)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let trajectories = pool.install(|| {
        (0..cfg.n_traj).into_par_iter().map(|i| simulate_trajectory(&stepper, psi0, cfg, i)).collect::<Result<Vec<_>>>()
    })?;
    TrajectoryEnsemble::from_trajectories(cfg.clone(), &stepper, trajectories)
}
