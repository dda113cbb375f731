//! Turns a [`RunConfig`] into a protocol and an initial state.

use crate::config::ConfigError;
use crate::run_config::{GammaChoice, InitialState, ModelConfig, ModelKind, RunConfig, UnitSystem};
use gravlink_core::models::{
    ktm2_lattice_protocol, ktm_protocol, linearized_td, pairwise_protocol, td_preflight, universal_protocol, LatticeParams, ModelParams,
    Rates, Units,
};
use gravlink_core::{Error, ProtocolSpec, StateVector, C64};

#[derive(Clone, Debug)]
pub struct Built {
    pub protocol: ProtocolSpec,
    pub psi0: StateVector,
    /// Scales used when SI inputs were rescaled.
    pub units: Option<Units>,
}

/// Key most likely responsible for a construction error.
fn blame(err: &Error) -> &'static str {
    match err {
        Error::CoincidentPositions(..) => "positions",
        Error::RateSymmetry(_) | Error::NonPositiveRate(_) => "gamma",
        Error::Divergent(_) => "smearing",
        Error::ZeroCrossing(_) | Error::AsymptoticMismatch(_) => "kernel",
        Error::DimensionTooLarge { .. } => "cutoff",
        Error::MissingLengthScale(_) => "omegas",
        _ => "model",
    }
}

fn model_error(m: &ModelConfig, err: Error) -> ConfigError {
    let key = blame(&err);
    let section = if key == "cutoff" && !matches!(m.kind, ModelKind::Ktm2) { "numerics" } else { "model" };
    let line = if section == "model" { m.line_of(key) } else { None };
    ConfigError::key(&format!("{section}.{key}"), line, err.to_string())
}

fn rates(g: &GammaChoice) -> Rates {
    match g {
        GammaChoice::Min => Rates::Minimal,
        GammaChoice::Uniform(v) => Rates::Uniform(*v),
        GammaChoice::Explicit(v) => Rates::Explicit(v.clone()),
    }
}

/// Static checks plus protocol construction; every failure is a config error.
pub fn build(rc: &RunConfig) -> Result<Built, ConfigError> {
    let m = &rc.model;
    let cutoff = rc.numerics.cutoff;
    let fail = |e: Error| model_error(m, e);
    let mut units = None;
    let protocol = match m.kind {
        ModelKind::Ktm2 => {
            let mut p = LatticeParams {
                mass: m.masses[0],
                sites: m.positions.clone(),
                cutoff_length: m.lattice_cutoff.expect("validated"),
                g: m.g,
                hbar: m.hbar,
                remove_self_interaction: m.remove_self_interaction,
            };
            if m.units == UnitSystem::Si {
                // lattice sites carry no trap, so rescale by mass and hbar only
                let length = p.cutoff_length;
                let u = Units { mass: p.mass, length, time: p.mass * length * length / p.hbar };
                p = LatticeParams {
                    mass: 1.0,
                    sites: p.sites.iter().map(|s| s.map(|x| x / length)).collect(),
                    cutoff_length: 1.0,
                    g: p.g * u.mass * u.time * u.time / (length * length * length),
                    hbar: 1.0,
                    remove_self_interaction: p.remove_self_interaction,
                };
                units = Some(u);
            }
            ktm2_lattice_protocol(&p, cutoff).map_err(fail)?
        }
        kind => {
            let mut params = ModelParams::new(m.masses.clone(), m.positions.clone(), m.omegas.clone(), m.g, m.hbar).map_err(fail)?;
            if m.units == UnitSystem::Si {
                let (p, u) = params.nondimensionalize().map_err(fail)?;
                params = p;
                units = Some(u);
            }
            let r = rates(&m.gamma);
            match kind {
                ModelKind::Ktm => ktm_protocol(&params, &r, cutoff).map_err(fail)?,
                ModelKind::Pairwise => pairwise_protocol(&params, &r, &m.axes).and_then(|p| p.build(cutoff)).map_err(fail)?,
                ModelKind::Universal => universal_protocol(&params, &r, &m.axes).and_then(|p| p.build(cutoff)).map_err(fail)?,
                ModelKind::TdLinear => {
                    let s = m.smearing.as_ref().expect("validated").build(params.hbar).map_err(fail)?;
                    td_preflight(&s, params.hbar).map_err(fail)?;
                    let k = m.kernel.as_ref().expect("validated").build(params.hbar, params.g).map_err(fail)?;
                    linearized_td(&params, &k, &s, &m.axes).and_then(|t| t.build(cutoff)).map_err(fail)?
                }
                ModelKind::Ktm2 => unreachable!(),
            }
        }
    };
    let protocol = match &units {
        Some(u) => {
            let label = format!("{} {}", protocol.label(), u.label());
            protocol.with_label(label)
        }
        None => protocol,
    };
    let psi0 = initial_state(&protocol, &rc.initial)?;
    Ok(Built { protocol, psi0, units })
}

fn initial_state(p: &ProtocolSpec, init: &InitialState) -> Result<StateVector, ConfigError> {
    let space = p.space().expect("builders attach a Hilbert space");
    let n = space.n_modes();
    let check_len = |len: usize, key: &str| {
        if len == n {
            Ok(())
        } else {
            Err(ConfigError::key(key, None, format!("expected {n} entries (one per mode), got {len}")))
        }
    };
    match init {
        InitialState::Ground => Ok(StateVector::ground(space)),
        InitialState::Coherent(a) => {
            check_len(a.len(), "state.alpha")?;
            let alphas: Vec<C64> = a.iter().map(|&x| C64::new(x, 0.0)).collect();
            StateVector::coherent(space, &alphas).map_err(|e| ConfigError::key("state.alpha", None, e.to_string()))
        }
        InitialState::Fock(o) => {
            check_len(o.len(), "state.occupations")?;
            StateVector::basis(space, o).map_err(|e| ConfigError::key("state.occupations", None, e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn rc(text: &str) -> RunConfig {
        RunConfig::from_config(&Config::parse(text).unwrap()).unwrap()
    }

    const BASE: &str = "[model]\nmodel = MODEL\nmasses = [1, 1]\npositions = [0, 2]\nomegas = [1, 1]\nG = 0.1\nEXTRA\n[numerics]\ndt = 0.01\nt_final = 0.1\ncutoff = 3\n";

    fn cfg(model: &str, extra: &str) -> String {
        BASE.replace("MODEL", model).replace("EXTRA", extra)
    }

    #[test]
    fn every_model_builds() {
        for (model, extra) in [
            ("ktm", ""),
            ("pairwise", "gamma = 0.3"),
            ("universal", ""),
            ("ktm2", "cutoff = 0.5"),
            ("td-linear", "kernel = dp\nsmearing = k2gauss:1"),
        ] {
            let b = build(&rc(&cfg(model, extra))).unwrap_or_else(|e| panic!("{model}: {e}"));
            assert_eq!(b.psi0.dim(), b.protocol.dim());
        }
    }

    #[test]
    fn gaussian_smearing_fails_preflight_citing_eta4() {
        let e = build(&rc(&cfg("td-linear", "kernel = dp\nsmearing = gauss:1"))).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("model.smearing"));
        assert!(e.message.contains("eta_4"), "{e}");
        assert!(e.line.is_some());
    }

    #[test]
    fn si_inputs_are_rescaled() {
        let text = "[model]\nmodel = ktm\nunits = si\nmasses = [1e-14, 1e-14]\npositions = [0, 1e-6]\nomegas = [1e3, 1e3]\n[numerics]\ndt = 0.01\nt_final = 0.1\ncutoff = 3\n";
        let b = build(&rc(text)).unwrap();
        let u = b.units.unwrap();
        assert!((u.time - 1e-3).abs() < 1e-15);
        assert!(b.protocol.label().contains("units("));
    }

    #[test]
    fn wrong_state_length() {
        let e = build(&rc(&format!("{}[state]\nalpha = [1]\n", cfg("ktm", "")))).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("state.alpha"));
    }
}
