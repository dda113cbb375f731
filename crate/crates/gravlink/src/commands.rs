//! Command implementations behind the CLI.

use crate::build::{build, Built};
use crate::config::{Config, ConfigError};
use crate::ensemble::{resolve_threads, simulate_parallel};
use crate::output::{moments_header, moments_row, num, write_csv, write_rho_snapshots, Manifest};
use crate::run_config::{KernelSpec, RunConfig, SmearingSpec};
use gravlink_core::analysis::{compare_ktm_td, decoherence_report, EarthAtomScenario};
use gravlink_core::hilbert::position_op;
use gravlink_core::kernels::{
    decoherence_profile, divergence_classify, eta_radial, hermite_inverse_gaussian, invert_kernel, HermiteConvention, Insertion,
};
use gravlink_core::master::{integrate, IntegrateOptions, PhaseSpace};
use gravlink_core::models::{ModelParams, G_SI, HBAR_SI};
use gravlink_core::stochastic::{snapshot_statistics, SimulationConfig};
use gravlink_core::DensityOperator;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug)]
pub enum CliError {
    Config(Vec<ConfigError>),
    Numerical(gravlink_core::Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(..) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(errs) => {
                for (i, e) in errs.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "config error: {e}")?;
                }
                Ok(())
            }
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
            CliError::Io(p, e) => write!(f, "i/o error on {}: {e}", p.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(vec![e])
    }
}

impl From<gravlink_core::Error> for CliError {
    fn from(e: gravlink_core::Error) -> Self {
        CliError::Numerical(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Reads, parses and type-checks a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![ConfigError::new(format!("cannot read {}: {e}", path.display()))]))?;
    let cfg = Config::parse(&text)?;
    RunConfig::from_config(&cfg).map_err(CliError::Config)
}

/// All diagnostics for a config file; empty means valid.
pub fn validate(path: &Path) -> Vec<ConfigError> {
    match load_config(path) {
        Ok(rc) => match build(&rc) {
            Ok(_) => Vec::new(),
            Err(e) => vec![e],
        },
        Err(CliError::Config(errs)) => errs,
        Err(e) => vec![ConfigError::new(e.to_string())],
    }
}

fn n_steps(rc: &RunConfig) -> usize {
    (rc.numerics.t_final / rc.numerics.dt).round() as usize
}

fn snapshot_every(rc: &RunConfig) -> usize {
    rc.numerics.snapshot_every.unwrap_or_else(|| (n_steps(rc) / 10).max(1))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    io(dir, std::fs::create_dir_all(dir))
}

/// Paths written by a command, relative to its output directory.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub struct MasterArgs<'a> {
    pub config: &'a RunConfig,
    pub out_dir: Option<&'a Path>,
}

/// RK4 master-equation run: `moments.csv`, `rho_snapshots.csv`.
pub fn master(args: MasterArgs<'_>) -> Result<Outcome> {
    let start = Instant::now();
    let rc = args.config;
    let Built { protocol, psi0, .. } = build(rc)?;
    let dir = args.out_dir.map(Path::to_path_buf).unwrap_or_else(|| rc.output_dir.clone());
    prepare_dir(&dir)?;
    let opts = IntegrateOptions { store_every: snapshot_every(rc), ..Default::default() };
    let sol = integrate(&DensityOperator::from_pure(&psi0), &protocol, rc.numerics.dt, rc.numerics.t_final, &opts)?;
    let space = protocol.space().expect("builders attach a Hilbert space");
    let phase = PhaseSpace::new(space)?;
    let moments = dir.join("moments.csv");
    let rows = sol.times.iter().zip(&sol.states).map(|(t, r)| moments_row(*t, r, &phase));
    io(&moments, write_csv(&moments, &moments_header(space.n_modes()), rows))?;
    let snaps = dir.join("rho_snapshots.csv");
    io(&snaps, write_rho_snapshots(&snaps, &sol.times, &sol.states))?;
    let files = vec![moments, snaps];
    let mut notes = vec![format!("protocol = {}", protocol.label()), format!("trace_drift = {:e}", sol.trace_drift)];
    notes.extend(sol.warnings.iter().map(|w| format!("warning: {w}")));
    let m = Manifest { command: "master", seed: None, threads: None, files: &files, notes: &notes, config: Some(&rc.source), wall_time: start.elapsed() };
    let manifest = io(&dir, m.write(&dir))?;
    let mut all = files;
    all.push(manifest);
    Ok(Outcome { files: all, summary: notes.join("\n") })
}

pub struct SimulateArgs<'a> {
    pub config: &'a RunConfig,
    pub out_dir: Option<&'a Path>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Trajectory ensemble plus the master-equation reference on the same grid.
pub fn simulate(args: SimulateArgs<'_>) -> Result<Outcome> {
    let start = Instant::now();
    let rc = args.config;
    let Built { protocol, psi0, .. } = build(rc)?;
    let dir = args.out_dir.map(Path::to_path_buf).unwrap_or_else(|| rc.output_dir.clone());
    prepare_dir(&dir)?;
    let n_traj = args.n_traj.unwrap_or(rc.numerics.n_traj);
    if n_traj == 0 {
        return Err(ConfigError::key("numerics.n_traj", None, "must be at least 1").into());
    }
    let seed = args.seed.unwrap_or(rc.numerics.seed);
    let threads = resolve_threads(args.threads, rc.numerics.threads);
    let every = snapshot_every(rc);
    let mut cfg = SimulationConfig::new(rc.numerics.dt, rc.numerics.t_final, n_traj, seed);
    cfg.snapshot_every = every;
    cfg.store_records = false;
    let ens = simulate_parallel(&protocol, &psi0, &cfg, threads)?;
    let reference = integrate(
        &DensityOperator::from_pure(&psi0),
        &protocol,
        cfg.dt,
        cfg.t_final,
        &IntegrateOptions { store_every: every, ..Default::default() },
    )?;
    let space = protocol.space().expect("builders attach a Hilbert space");
    let x: Vec<_> = (0..space.n_modes()).map(|k| position_op(space, k)).collect::<gravlink_core::Result<_>>()?;
    let mut header = vec!["t".to_string(), "n_traj".to_string()];
    for k in 1..=x.len() {
        header.push(format!("mean_x{k}"));
        header.push(format!("stderr_x{k}"));
    }
    header.extend(["purity".into(), "trace_distance_me".into(), "trace_distance_me_half".into()]);
    let mut rows = Vec::new();
    for (k, t) in ens.times().iter().enumerate() {
        let mut row = vec![num(*t), n_traj.to_string()];
        for op in &x {
            let (mean, err) = snapshot_statistics(&ens, k, |psi| psi.expect(op));
            row.push(num(mean));
            row.push(num(err));
        }
        let rho = ens.density_of_first(*t, n_traj)?;
        let half = ens.density_of_first(*t, (n_traj / 2).max(1))?;
        let me = reference.state_at(*t)?;
        row.push(num(rho.purity()));
        row.push(num(rho.trace_distance(&me)));
        row.push(num(half.trace_distance(&me)));
        rows.push(row);
    }
    let summary_path = dir.join("ensemble_summary.csv");
    let last = rows.last().cloned().unwrap_or_default();
    io(&summary_path, write_csv(&summary_path, &header, rows))?;
    let files = vec![summary_path];
    let mut notes = vec![format!("protocol = {}", protocol.label()), format!("n_traj = {n_traj}")];
    notes.extend(ens.warnings.iter().map(|w| format!("warning: {w}")));
    let m = Manifest { command: "simulate", seed: Some(seed), threads: Some(threads), files: &files, notes: &notes, config: Some(&rc.source), wall_time: start.elapsed() };
    let manifest = io(&dir, m.write(&dir))?;
    let td = last.get(header.len() - 2).cloned().unwrap_or_default();
    let mut all = files;
    all.push(manifest);
    Ok(Outcome { files: all, summary: format!("{}\nfinal trace distance to master equation = {td}", notes.join("\n")) })
}

/// Either a directory (CSV + manifest) or standard output (CSV only).
fn emit(command: &str, out_dir: Option<&Path>, file: &str, header: &[String], rows: Vec<Vec<String>>, notes: &[String], start: Instant) -> Result<Outcome> {
    match out_dir {
        Some(dir) => {
            prepare_dir(dir)?;
            let path = dir.join(file);
            io(&path, write_csv(&path, header, rows))?;
            let files = vec![path];
            let m = Manifest { command, seed: None, threads: None, files: &files, notes, config: None, wall_time: start.elapsed() };
            let manifest = io(dir, m.write(dir))?;
            let mut all = files;
            all.push(manifest);
            Ok(Outcome { files: all, summary: notes.join("\n") })
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = csv::Writer::from_writer(stdout.lock());
            let p = PathBuf::from("<stdout>");
            io(&p, w.write_record(header).map_err(std::io::Error::from))?;
            for r in rows {
                io(&p, w.write_record(&r).map_err(std::io::Error::from))?;
            }
            io(&p, w.flush())?;
            Ok(Outcome { files: Vec::new(), summary: notes.join("\n") })
        }
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub struct EtaArgs<'a> {
    pub smearing: &'a str,
    pub hbar: f64,
    pub r_max: f64,
    pub points: usize,
    pub out_dir: Option<&'a Path>,
}

/// `r, eta0, eta2, eta4` on a uniform radius grid.
pub fn kernels_eta(a: EtaArgs<'_>) -> Result<Outcome> {
    let start = Instant::now();
    let spec = SmearingSpec::parse(a.smearing).map_err(|m| ConfigError::key("smearing", None, m))?;
    let s = spec.build(a.hbar)?;
    if a.points < 2 || !(a.r_max > 0.0) {
        return Err(ConfigError::key("points", None, "need at least 2 points and r_max > 0").into());
    }
    let mut rows = Vec::with_capacity(a.points);
    for i in 0..a.points {
        let r = a.r_max * i as f64 / (a.points - 1) as f64;
        let mut row = vec![num(r)];
        for n in [0, 2, 4] {
            row.push(num(eta_radial(n, &s, &Insertion::None, r, a.hbar)?));
        }
        rows.push(row);
    }
    let notes = vec![format!("smearing = {}", s.label()), format!("hbar = {}", a.hbar)];
    emit("kernels eta", a.out_dir, "eta.csv", &strings(&["r", "eta0", "eta2", "eta4"]), rows, &notes, start)
}

pub struct HermiteArgs<'a> {
    pub sigma: f64,
    pub max_order: usize,
    pub out_dir: Option<&'a Path>,
}

/// Convolution deviation of the truncated Hermite inverse for every
/// coefficient convention; the notes name the conventions that decrease
/// monotonically with the order.
pub fn kernels_hermite(a: HermiteArgs<'_>) -> Result<Outcome> {
    let start = Instant::now();
    if !(a.sigma > 0.0) {
        return Err(ConfigError::key("sigma", None, "must be positive").into());
    }
    let conventions = HermiteConvention::ALL;
    let mut table = Vec::with_capacity(conventions.len());
    for c in conventions {
        let devs = (0..=a.max_order).map(|o| hermite_inverse_gaussian(a.sigma, o, c).convolution_deviation()).collect::<gravlink_core::Result<Vec<_>>>()?;
        table.push(devs);
    }
    let rows = (0..=a.max_order).map(|o| std::iter::once(o.to_string()).chain(table.iter().map(|d| num(d[o]))).collect()).collect();
    let mut header = vec!["order".to_string()];
    header.extend(conventions.iter().map(|c| format!("deviation_{}", c.name())));
    let passing: Vec<&str> =
        conventions.iter().zip(&table).filter(|(_, d)| d.windows(2).all(|w| w[1] < w[0])).map(|(c, _)| c.name()).collect();
    let notes = vec![
        format!("sigma = {}", a.sigma),
        format!("monotone conventions: {}", if passing.is_empty() { "none".to_string() } else { passing.join(", ") }),
    ];
    emit("kernels hermite", a.out_dir, "hermite.csv", &header, rows, &notes, start)
}

pub struct InvertArgs<'a> {
    pub kernel: &'a str,
    pub hbar: f64,
    pub g: f64,
    pub points: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub out_dir: Option<&'a Path>,
}

/// `k, kernel, inverse, check` with `check = γ̃ γ̃⁻¹ (2πħ)³`.
pub fn kernels_invert(a: InvertArgs<'_>) -> Result<Outcome> {
    let start = Instant::now();
    let spec = KernelSpec::parse(a.kernel).map_err(|m| ConfigError::key("kernel", None, m))?;
    if a.points < 2 || !(a.k_min > 0.0 && a.k_max > a.k_min) {
        return Err(ConfigError::key("points", None, "need at least 2 points and 0 < k_min < k_max").into());
    }
    let k = spec.build(a.hbar, a.g)?;
    let inv = invert_kernel(&k)?;
    let norm = (2.0 * PI * a.hbar).powi(3);
    let ratio = (a.k_max / a.k_min).ln();
    let rows = (0..a.points)
        .map(|i| {
            let q = a.k_min * (ratio * i as f64 / (a.points - 1) as f64).exp();
            let (v, w) = (k.eval(q), inv.eval(q));
            vec![num(q), num(v), num(w), num(v * w * norm)]
        })
        .collect();
    let notes = vec![format!("kernel = {}", k.label()), format!("inverse = {}", inv.label())];
    emit("kernels invert", a.out_dir, "invert.csv", &strings(&["k", "kernel", "inverse", "check"]), rows, &notes, start)
}

/// The correlator/smearing pairs whose convergence is documented.
pub fn reference_cases() -> Vec<(String, Option<String>)> {
    vec![
        ("delta:1".into(), None),
        ("gauss:1".into(), None),
        ("dp".into(), None),
        ("dp".into(), Some("k2gauss:1".into())),
        ("delta:1".into(), Some("k2gauss:1".into())),
    ]
}

/// One verdict line per (kernel, smearing) pair.
pub fn classify_lines(cases: &[(String, Option<String>)], hbar: f64, g: f64) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for (kernel, smearing) in cases {
        let k = KernelSpec::parse(kernel).map_err(|m| ConfigError::key("kernel", None, m))?.build(hbar, g)?;
        let s = match smearing.as_deref() {
            None | Some("none") => None,
            Some(s) => Some(SmearingSpec::parse(s).map_err(|m| ConfigError::key("smearing", None, m))?.build(hbar)?),
        };
        let prof = decoherence_profile(&k, g, s.as_ref())?;
        let m = divergence_classify(&prof.measurement)?;
        let f = divergence_classify(&prof.feedback)?;
        let t = divergence_classify(&prof.total)?;
        lines.push(format!(
            "kernel={kernel} smearing={}: measurement={m} feedback={f} total={t}",
            smearing.as_deref().unwrap_or("none")
        ));
    }
    Ok(lines)
}

pub struct CompareArgs<'a> {
    pub kernel: &'a str,
    pub smearing: &'a str,
    pub separation: f64,
    pub mass: f64,
    pub g: f64,
    pub hbar: f64,
    pub gamma: Option<[f64; 2]>,
    pub out_dir: Option<&'a Path>,
}

/// KTM vs linearized TD decoherence matrices for two masses on the z-axis.
pub fn compare(a: CompareArgs<'_>) -> Result<(Outcome, String)> {
    let start = Instant::now();
    let k = KernelSpec::parse(a.kernel).map_err(|m| ConfigError::key("kernel", None, m))?.build(a.hbar, a.g)?;
    let s = SmearingSpec::parse(a.smearing).map_err(|m| ConfigError::key("smearing", None, m))?.build(a.hbar)?;
    let params = ModelParams::collinear(vec![a.mass, a.mass], &[0.0, a.separation], vec![1.0, 1.0], a.g, a.hbar)
        .map_err(|e| ConfigError::key("separation", None, e.to_string()))?;
    let c = compare_ktm_td(&params, &k, &s, a.gamma)?;
    let mut text = format!("KTM (gamma = {:e}, {:e}) vs linearized TD ({}, {})\n", c.ktm_rates[0], c.ktm_rates[1], k.label(), s.label());
    let mut rows = Vec::new();
    for (name, m) in [("ktm", &c.ktm), ("td", &c.td)] {
        text += &format!("{name}: [[{:e}, {:e}], [{:e}, {:e}]]\n", m.matrix[(0, 0)], m.matrix[(0, 1)], m.matrix[(1, 0)], m.matrix[(1, 1)]);
        for i in 0..2 {
            for j in 0..2 {
                rows.push(vec![name.to_string(), m.labels[i].clone(), m.labels[j].clone(), num(m.matrix[(i, j)])]);
            }
        }
    }
    text += &format!("td off-diagonal ratio |D12|/sqrt(D11 D22) = {:e}\n", c.td_offdiagonal_ratio);
    text += &format!("ktm diagonal: {}\n", c.ktm.is_diagonal());
    let notes = vec![format!("td_offdiagonal_ratio = {:e}", c.td_offdiagonal_ratio)];
    let outcome = match a.out_dir {
        Some(_) => emit("compare", a.out_dir, "compare.csv", &strings(&["model", "row", "col", "value"]), rows, &notes, start)?,
        None => Outcome { files: Vec::new(), summary: notes.join("\n") },
    };
    Ok((outcome, text))
}

pub struct EarthAtomArgs<'a> {
    pub scenario: EarthAtomScenario,
    pub out_dir: Option<&'a Path>,
}

pub fn earth_atom_defaults() -> EarthAtomScenario {
    EarthAtomScenario { g: G_SI, hbar: HBAR_SI, ..Default::default() }
}

/// Order-of-magnitude Earth–atom report.
pub fn report_earth_atom(a: EarthAtomArgs<'_>) -> Result<(Outcome, String)> {
    let start = Instant::now();
    let r = decoherence_report(&a.scenario, &[])?;
    let text = r.to_text();
    let rows = vec![
        vec!["lambda".to_string(), num(r.lambda)],
        vec!["exponent".to_string(), num(r.exponent)],
        vec!["decades".to_string(), num(r.decades())],
    ];
    let notes = vec!["order-of-magnitude estimate".to_string()];
    let outcome = match a.out_dir {
        Some(_) => emit("report earth-atom", a.out_dir, "earth_atom.csv", &strings(&["quantity", "value"]), rows, &notes, start)?,
        None => Outcome::default(),
    };
    Ok((outcome, text))
}

/// Writes `lines` to standard output.
pub fn print_lines(lines: &[String]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
}
