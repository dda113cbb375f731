//! Typed view of a config file.

use crate::config::{parse_value, Config, ConfigError, Value};
use gravlink_core::kernels::{delta_kernel, dp_kernel, gaussian_kernel, RadialKernel, SmearingProfile};
use gravlink_core::models::{G_SI, HBAR_SI};
use std::path::PathBuf;

/// Seed used when the config does not set one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Ktm,
    Pairwise,
    Universal,
    Ktm2,
    TdLinear,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ktm => "ktm",
            ModelKind::Pairwise => "pairwise",
            ModelKind::Universal => "universal",
            ModelKind::Ktm2 => "ktm2",
            ModelKind::TdLinear => "td-linear",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GammaChoice {
    Min,
    Uniform(f64),
    Explicit(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitSystem {
    /// Values are used as given.
    Natural,
    /// SI inputs, rescaled to ħ = m₁ = Ω₁ = 1 before building.
    Si,
}

/// `dp | delta:A | gauss:sigma`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Dp,
    Delta(f64),
    Gauss(f64),
}

impl KernelSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64, String> {
            let a = a.ok_or_else(|| format!("kernel `{name}` needs a parameter, e.g. `{name}:1.0`"))?;
            let v: f64 = a.parse().map_err(|_| format!("`{a}` is not a number"))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(format!("kernel parameter must be positive, got {v}"))
            }
        };
        match name {
            "dp" if arg.is_none() => Ok(KernelSpec::Dp),
            "delta" => Ok(KernelSpec::Delta(number(arg)?)),
            "gauss" => Ok(KernelSpec::Gauss(number(arg)?)),
            _ => Err(format!("unknown kernel `{s}` (expected dp, delta:A or gauss:sigma)")),
        }
    }

    pub fn build(&self, hbar: f64, g: f64) -> gravlink_core::Result<RadialKernel> {
        match *self {
            KernelSpec::Dp => dp_kernel(hbar, g),
            KernelSpec::Delta(a) => delta_kernel(a, hbar),
            KernelSpec::Gauss(s) => gaussian_kernel(s, hbar),
        }
    }
}

/// `k2gauss:alpha | gauss:sigma | none`.
#[derive(Clone, Debug, PartialEq)]
pub enum SmearingSpec {
    K2Gauss(f64),
    Gauss(f64),
    None,
}

impl SmearingSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "none" {
            return Ok(SmearingSpec::None);
        }
        let (name, arg) = s.split_once(':').ok_or_else(|| format!("unknown smearing `{s}` (expected k2gauss:alpha, gauss:sigma or none)"))?;
        let v: f64 = arg.trim().parse().map_err(|_| format!("`{}` is not a number", arg.trim()))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("smearing parameter must be positive, got {v}"));
        }
        match name.trim() {
            "k2gauss" => Ok(SmearingSpec::K2Gauss(v)),
            "gauss" => Ok(SmearingSpec::Gauss(v)),
            other => Err(format!("unknown smearing `{other}` (expected k2gauss:alpha, gauss:sigma or none)")),
        }
    }

    pub fn build(&self, hbar: f64) -> gravlink_core::Result<SmearingProfile> {
        match *self {
            SmearingSpec::K2Gauss(a) => SmearingProfile::power_gaussian(a, 2.0),
            SmearingSpec::Gauss(s) => SmearingProfile::gaussian(s, hbar),
            SmearingSpec::None => SmearingProfile::none(hbar),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Ground,
    /// Real coherent amplitudes, one per mode.
    Coherent(Vec<f64>),
    /// Fock occupations, one per mode.
    Fock(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
    pub omegas: Vec<f64>,
    pub gamma: GammaChoice,
    pub units: UnitSystem,
    pub g: f64,
    pub hbar: f64,
    /// Lattice cutoff `a` (ktm2).
    pub lattice_cutoff: Option<f64>,
    pub remove_self_interaction: bool,
    pub kernel: Option<KernelSpec>,
    pub smearing: Option<SmearingSpec>,
    pub axes: Vec<usize>,
    /// Line of each key, for diagnostics raised while building.
    pub lines: Vec<(String, usize)>,
}

impl ModelConfig {
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, l)| *l)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Numerics {
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    /// Fock cutoff M per mode.
    pub cutoff: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub snapshot_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Option<String>,
    pub model: ModelConfig,
    pub numerics: Numerics,
    pub initial: InitialState,
    pub output_dir: PathBuf,
    pub source: String,
}

const MODEL_KEYS: &[&str] = &[
    "model", "masses", "positions", "omegas", "gamma", "units", "G", "hbar", "cutoff", "self_interaction", "kernel", "smearing", "axes",
];
const NUMERICS_KEYS: &[&str] = &["dt", "t_final", "n_traj", "cutoff", "seed", "threads", "snapshot_every"];
const STATE_KEYS: &[&str] = &["alpha", "occupations"];
const OUTPUT_KEYS: &[&str] = &["dir"];
const TOP_KEYS: &[&str] = &["command"];

/// Collects diagnostics instead of stopping at the first one.
struct Reader<'a> {
    cfg: &'a Config,
    errors: Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a crate::config::Entry> {
        self.cfg.get(section, key)
    }

    fn fail(&mut self, section: &str, key: &str, msg: impl Into<String>) {
        let line = self.entry(section, key).map(|e| e.line);
        self.errors.push(ConfigError::key(&qualified(section, key), line, msg));
    }

    fn missing(&mut self, section: &str, key: &str) {
        let line = self.cfg.sections().find(|(s, _)| *s == section).map(|(_, l)| l);
        self.errors.push(ConfigError::key(&qualified(section, key), line, "required key is missing"));
    }

    fn parsed<T>(&mut self, section: &str, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Option<T> {
        let e = self.entry(section, key)?;
        match f(&e.value) {
            Ok(v) => Some(v),
            Err(m) => {
                self.fail(section, key, m);
                None
            }
        }
    }

    fn required<T>(&mut self, section: &str, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Option<T> {
        if self.entry(section, key).is_none() {
            self.missing(section, key);
            return None;
        }
        self.parsed(section, key, f)
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn positive(v: f64) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

fn count(s: &str) -> Result<usize, String> {
    s.trim().parse::<usize>().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    parse_value(s)?.numbers()
}

fn axes(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for c in s.trim().chars().filter(|c| !matches!(c, ',' | ' ')) {
        let a = match c {
            'x' => 0,
            'y' => 1,
            'z' => 2,
            _ => return Err(format!("axes are letters from `xyz`, got `{c}`")),
        };
        if out.contains(&a) {
            return Err(format!("axis `{c}` repeated"));
        }
        out.push(a);
    }
    if out.is_empty() {
        return Err("at least one axis is required".into());
    }
    Ok(out)
}

impl RunConfig {
    /// Reads and checks every key, returning all diagnostics at once.
    pub fn from_config(cfg: &Config) -> Result<Self, Vec<ConfigError>> {
        let mut r = Reader { cfg, errors: Vec::new() };
        for (section, line) in cfg.sections() {
            if !matches!(section, "model" | "numerics" | "state" | "output") {
                r.errors.push(ConfigError::at(line, format!("unknown section [{section}]")));
            }
        }
        for (section, allowed) in [("", TOP_KEYS), ("model", MODEL_KEYS), ("numerics", NUMERICS_KEYS), ("state", STATE_KEYS), ("output", OUTPUT_KEYS)] {
            for (k, e) in cfg.keys(section) {
                if !allowed.contains(&k) {
                    r.errors.push(ConfigError::key(&qualified(section, k), Some(e.line), "unknown key"));
                }
            }
        }

        let kind = r.required("model", "model", |s| match s.trim() {
            "ktm" => Ok(ModelKind::Ktm),
            "pairwise" => Ok(ModelKind::Pairwise),
            "universal" => Ok(ModelKind::Universal),
            "ktm2" => Ok(ModelKind::Ktm2),
            "td-linear" => Ok(ModelKind::TdLinear),
            other => Err(format!("unknown model `{other}` (expected ktm, pairwise, universal, ktm2 or td-linear)")),
        });
        let units = r
            .parsed("model", "units", |s| match s.trim() {
                "natural" => Ok(UnitSystem::Natural),
                "si" => Ok(UnitSystem::Si),
                other => Err(format!("unknown unit system `{other}` (expected natural or si)")),
            })
            .unwrap_or(UnitSystem::Natural);
        let (g_default, hbar_default) = match units {
            UnitSystem::Natural => (1.0, 1.0),
            UnitSystem::Si => (G_SI, HBAR_SI),
        };
        let g = r.parsed("model", "G", |s| number(s).and_then(|v| if v >= 0.0 { Ok(v) } else { Err(format!("must be non-negative, got {v}")) }));
        let g = g.unwrap_or(g_default);
        let hbar = r.parsed("model", "hbar", |s| number(s).and_then(positive)).unwrap_or(hbar_default);
        let masses = r.required("model", "masses", |s| {
            let m = numbers(s)?;
            if m.is_empty() {
                return Err("at least one mass is required".into());
            }
            if let Some(x) = m.iter().find(|x| !(**x > 0.0)) {
                return Err(format!("masses must be positive, got {x}"));
            }
            Ok(m)
        });
        let positions = r.required("model", "positions", |s| parse_value(s)?.points());
        let n = masses.as_ref().map(|m| m.len());
        if let (Some(n), Some(p)) = (n, &positions) {
            if p.len() != n {
                r.fail("model", "positions", format!("expected {n} positions, got {}", p.len()));
            }
        }
        let needs_traps = !matches!(kind, Some(ModelKind::Ktm2));
        let omegas = if needs_traps {
            r.required("model", "omegas", |s| {
                let w = numbers(s)?;
                if let Some(x) = w.iter().find(|x| !(**x >= 0.0)) {
                    return Err(format!("trap frequencies must be non-negative, got {x}"));
                }
                Ok(w)
            })
        } else {
            r.parsed("model", "omegas", numbers)
        };
        if let (Some(n), Some(w)) = (n, &omegas) {
            if needs_traps && w.len() != n {
                r.fail("model", "omegas", format!("expected {n} trap frequencies, got {}", w.len()));
            }
        }
        let gamma = r
            .parsed("model", "gamma", |s| {
                if s.trim() == "min" {
                    return Ok(GammaChoice::Min);
                }
                match parse_value(s)? {
                    Value::Number(v) => positive(v).map(GammaChoice::Uniform),
                    list => {
                        let v = list.numbers()?;
                        if let Some(x) = v.iter().find(|x| !(**x > 0.0)) {
                            return Err(format!("rates must be positive, got {x}"));
                        }
                        Ok(GammaChoice::Explicit(v))
                    }
                }
            })
            .unwrap_or(GammaChoice::Min);
        let lattice_cutoff = match kind {
            Some(ModelKind::Ktm2) => r.required("model", "cutoff", |s| number(s).and_then(positive)),
            _ => r.parsed("model", "cutoff", |s| number(s).and_then(positive)),
        };
        let remove_self_interaction = r
            .parsed("model", "self_interaction", |s| match s.trim() {
                "removed" => Ok(true),
                "kept" => Ok(false),
                other => Err(format!("expected `removed` or `kept`, got `{other}`")),
            })
            .unwrap_or(true);
        let is_td = matches!(kind, Some(ModelKind::TdLinear));
        let kernel = if is_td { r.required("model", "kernel", KernelSpec::parse) } else { r.parsed("model", "kernel", KernelSpec::parse) };
        let smearing =
            if is_td { r.required("model", "smearing", SmearingSpec::parse) } else { r.parsed("model", "smearing", SmearingSpec::parse) };
        let axes_v = r.parsed("model", "axes", axes).unwrap_or_else(|| vec![2]);
        if matches!(kind, Some(ModelKind::Ktm)) && axes_v != vec![2] {
            r.fail("model", "axes", "the ktm model is one-dimensional (axes = z)");
        }
        if matches!(kind, Some(ModelKind::Ktm)) && n.is_some_and(|n| n != 2) {
            r.fail("model", "masses", format!("the ktm model needs exactly 2 masses, got {}", n.unwrap()));
        }
        if matches!(kind, Some(ModelKind::Ktm2)) {
            if let Some(m) = &masses {
                if m.iter().any(|x| *x != m[0]) {
                    r.fail("model", "masses", "the ktm2 lattice uses one mass for every site");
                }
            }
        }

        let dt = r.required("numerics", "dt", |s| number(s).and_then(positive));
        let t_final = r.required("numerics", "t_final", |s| number(s).and_then(positive));
        if let (Some(dt), Some(t)) = (dt, t_final) {
            let steps = (t / dt).round();
            if steps < 1.0 || (steps * dt - t).abs() > 1e-9 * t {
                r.fail("numerics", "dt", format!("dt = {dt} must divide t_final = {t}"));
            }
        }
        let n_traj = r.parsed("numerics", "n_traj", |s| count(s).and_then(|v| if v >= 1 { Ok(v) } else { Err("must be at least 1".into()) }));
        let cutoff = r.required("numerics", "cutoff", |s| count(s).and_then(|v| if v >= 2 { Ok(v) } else { Err("the Fock cutoff must be at least 2".into()) }));
        let seed = r.parsed("numerics", "seed", |s| s.trim().parse::<u64>().map_err(|_| format!("`{s}` is not a u64"))).unwrap_or(DEFAULT_SEED);
        let threads = r.parsed("numerics", "threads", |s| count(s).and_then(|v| if v >= 1 { Ok(v) } else { Err("must be at least 1".into()) }));
        let snapshot_every =
            r.parsed("numerics", "snapshot_every", |s| count(s).and_then(|v| if v >= 1 { Ok(v) } else { Err("must be at least 1".into()) }));

        let alpha = r.parsed("state", "alpha", numbers);
        let occupations = r.parsed("state", "occupations", |s| {
            numbers(s)?
                .into_iter()
                .map(|x| if x >= 0.0 && x.fract() == 0.0 { Ok(x as usize) } else { Err(format!("occupations are non-negative integers, got {x}")) })
                .collect::<Result<Vec<_>, _>>()
        });
        let initial = match (alpha, occupations) {
            (Some(_), Some(_)) => {
                r.fail("state", "occupations", "set either `alpha` or `occupations`, not both");
                InitialState::Ground
            }
            (Some(a), None) => InitialState::Coherent(a),
            (None, Some(o)) => InitialState::Fock(o),
            (None, None) => InitialState::Ground,
        };
        let output_dir = cfg.get("output", "dir").map(|e| PathBuf::from(e.value.trim())).unwrap_or_else(|| PathBuf::from("out"));
        let command = cfg.get("", "command").map(|e| e.value.trim().to_string());

        if !r.errors.is_empty() {
            r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
            return Err(r.errors);
        }
        let lines = cfg.keys("model").map(|(k, e)| (k.to_string(), e.line)).collect();
        let n = masses.as_ref().map_or(0, |m| m.len());
        Ok(RunConfig {
            command,
            model: ModelConfig {
                kind: kind.expect("checked"),
                masses: masses.expect("checked"),
                positions: positions.expect("checked"),
                omegas: omegas.unwrap_or_else(|| vec![1.0; n]),
                gamma,
                units,
                g,
                hbar,
                lattice_cutoff,
                remove_self_interaction,
                kernel,
                smearing,
                axes: axes_v,
                lines,
            },
            numerics: Numerics {
                dt: dt.expect("checked"),
                t_final: t_final.expect("checked"),
                n_traj: n_traj.unwrap_or(1),
                cutoff: cutoff.expect("checked"),
                seed,
                threads,
                snapshot_every,
            },
            initial,
            output_dir,
            source: cfg.source().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KTM: &str = "\
[model]
model = ktm
masses = [1, 1]
positions = [0, 1]
omegas = [1, 1]
G = 0.05
gamma = min

[numerics]
dt = 1e-3
t_final = 1
cutoff = 6
";

    fn read(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
        RunConfig::from_config(&Config::parse(text).unwrap())
    }

    #[test]
    fn defaults() {
        let rc = read(KTM).unwrap();
        assert_eq!(rc.numerics.seed, DEFAULT_SEED);
        assert_eq!(rc.numerics.n_traj, 1);
        assert_eq!(rc.model.positions[1], [0.0, 0.0, 1.0]);
        assert_eq!(rc.initial, InitialState::Ground);
        assert_eq!(rc.model.gamma, GammaChoice::Min);
    }

    #[test]
    fn missing_masses_names_the_key() {
        let errs = read(&KTM.replace("masses = [1, 1]\n", "")).unwrap_err();
        assert!(errs.iter().any(|e| e.key.as_deref() == Some("model.masses") && e.message.contains("missing")), "{errs:?}");
    }

    #[test]
    fn all_problems_are_reported() {
        let text = KTM.replace("dt = 1e-3", "dt = -1").replace("gamma = min", "gamma = fast").replace("[numerics]", "[numerics]\nbogus = 1");
        let errs = read(&text).unwrap_err();
        let keys: Vec<_> = errs.iter().filter_map(|e| e.key.clone()).collect();
        for k in ["numerics.dt", "model.gamma", "numerics.bogus"] {
            assert!(keys.iter().any(|x| x == k), "{k} missing from {keys:?}");
        }
        assert!(errs.iter().all(|e| e.line.is_some()));
    }

    #[test]
    fn kernel_and_smearing_specs() {
        assert_eq!(KernelSpec::parse("delta:2.5").unwrap(), KernelSpec::Delta(2.5));
        assert_eq!(KernelSpec::parse("dp").unwrap(), KernelSpec::Dp);
        assert!(KernelSpec::parse("gauss").is_err());
        assert!(KernelSpec::parse("gauss:-1").is_err());
        assert_eq!(SmearingSpec::parse("k2gauss:1").unwrap(), SmearingSpec::K2Gauss(1.0));
        assert_eq!(SmearingSpec::parse("none").unwrap(), SmearingSpec::None);
        assert!(SmearingSpec::parse("box:1").is_err());
    }

    #[test]
    fn td_requires_kernel_and_smearing() {
        let errs = read(&KTM.replace("model = ktm", "model = td-linear")).unwrap_err();
        let keys: Vec<_> = errs.iter().filter_map(|e| e.key.clone()).collect();
        assert!(keys.contains(&"model.kernel".to_string()) && keys.contains(&"model.smearing".to_string()));
    }
}
