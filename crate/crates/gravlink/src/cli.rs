//! Argument parsing and dispatch.

use crate::commands::{
    self, classify_lines, compare, earth_atom_defaults, kernels_eta, kernels_hermite, kernels_invert, load_config, master, reference_cases, report_earth_atom,
    simulate, CliError, CompareArgs, EarthAtomArgs, EtaArgs, HermiteArgs, InvertArgs, MasterArgs, SimulateArgs,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "gravlink", version, about = "Measurement-and-feedback models of Newtonian gravity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Unravel the model into stochastic trajectories and compare with the master equation.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "n-traj")]
        n_traj: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (falls back to GRAVLINK_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Integrate the master equation with RK4.
    Master {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Kernel utilities.
    Kernels {
        #[command(subcommand)]
        command: KernelCommand,
    },
    /// Compare KTM and linearized TD decoherence matrices for two masses.
    Compare {
        #[arg(long, default_value = "dp")]
        kernel: String,
        #[arg(long, default_value = "k2gauss:1")]
        smearing: String,
        #[arg(long, default_value_t = 5.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long = "G", default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        /// KTM rates `g1,g2`; defaults to the minimizing rate.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        gamma: Option<Vec<f64>>,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
    /// Reports.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[output] dir`.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum KernelCommand {
    /// Tabulate `eta_0, eta_2, eta_4` against separation.
    Eta {
        #[arg(long, default_value = "k2gauss:1")]
        smearing: String,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long = "r-max", default_value_t = 6.0)]
        r_max: f64,
        #[arg(long, default_value_t = 61)]
        points: usize,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
    /// Tabulate a kernel, its inverse and their normalized product.
    Invert {
        #[arg(long, default_value = "dp")]
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long = "G", default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long = "k-min", default_value_t = 1e-3)]
        k_min: f64,
        #[arg(long = "k-max", default_value_t = 1e3)]
        k_max: f64,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
    /// Convolution deviation of the Hermite-series inverse Gaussian, per convention.
    Hermite {
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long = "max-order", default_value_t = 6)]
        max_order: usize,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
    /// Convergence verdict of the decoherence integrals.
    Classify {
        /// Kernel to classify; without it the reference cases are listed.
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        smearing: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long = "G", default_value_t = 1.0)]
        g: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum ReportCommand {
    /// Earth–atom decoherence rate and suppression exponent.
    EarthAtom {
        #[arg(long)]
        geometry: Option<f64>,
        #[arg(long = "m-atom")]
        m_atom: Option<f64>,
        #[arg(long = "m-earth")]
        m_earth: Option<f64>,
        #[arg(long = "r-earth")]
        r_earth: Option<f64>,
        /// Superposition size in metres.
        #[arg(long = "delta-z", default_value_t = 0.0)]
        delta_z: f64,
        /// Duration in seconds.
        #[arg(long, default_value_t = 0.0)]
        duration: f64,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { run, n_traj, seed, threads } => {
            let rc = load_config(&run.config)?;
            let o = simulate(SimulateArgs { config: &rc, out_dir: run.out_dir.as_deref(), n_traj, seed, threads })?;
            report(&o);
        }
        Command::Master { run } => {
            let rc = load_config(&run.config)?;
            let o = master(MasterArgs { config: &rc, out_dir: run.out_dir.as_deref() })?;
            report(&o);
        }
        Command::Kernels { command } => match command {
            KernelCommand::Eta { smearing, hbar, r_max, points, out_dir } => {
                let o = kernels_eta(EtaArgs { smearing: &smearing, hbar, r_max, points, out_dir: out_dir.as_deref() })?;
                report(&o);
            }
            KernelCommand::Invert { kernel, hbar, g, points, k_min, k_max, out_dir } => {
                let o = kernels_invert(InvertArgs { kernel: &kernel, hbar, g, points, k_min, k_max, out_dir: out_dir.as_deref() })?;
                report(&o);
            }
            KernelCommand::Hermite { sigma, max_order, out_dir } => {
                let o = kernels_hermite(HermiteArgs { sigma, max_order, out_dir: out_dir.as_deref() })?;
                if o.files.is_empty() {
                    eprintln!("{}", o.summary);
                }
                report(&o);
            }
            KernelCommand::Classify { kernel, smearing, hbar, g } => {
                let cases = match kernel {
                    Some(k) => vec![(k, smearing)],
                    None => reference_cases(),
                };
                commands::print_lines(&classify_lines(&cases, hbar, g)?);
            }
        },
        Command::Compare { kernel, smearing, separation, mass, g, hbar, gamma, out_dir } => {
            let gamma = gamma.map(|v| [v[0], v[1]]);
            let (o, text) = compare(CompareArgs { kernel: &kernel, smearing: &smearing, separation, mass, g, hbar, gamma, out_dir: out_dir.as_deref() })?;
            print!("{text}");
            report(&o);
        }
        Command::Report { command: ReportCommand::EarthAtom { geometry, m_atom, m_earth, r_earth, delta_z, duration, out_dir } } => {
            let d = earth_atom_defaults();
            let scenario = gravlink_core::analysis::EarthAtomScenario {
                geometry: geometry.unwrap_or(d.geometry),
                m_atom: m_atom.unwrap_or(d.m_atom),
                m_earth: m_earth.unwrap_or(d.m_earth),
                r_earth: r_earth.unwrap_or(d.r_earth),
                delta_z,
                duration,
                ..d
            };
            let (o, text) = report_earth_atom(EarthAtomArgs { scenario, out_dir: out_dir.as_deref() })?;
            print!("{text}");
            report(&o);
        }
        Command::Validate { config } => {
            let diags = commands::validate(&config);
            if diags.is_empty() {
                println!("{}: ok, no diagnostics", config.display());
            } else {
                return Err(CliError::Config(diags));
            }
        }
    }
    Ok(())
}

fn report(o: &commands::Outcome) {
    for f in &o.files {
        eprintln!("wrote {}", f.display());
    }
    if !o.summary.is_empty() && !o.files.is_empty() {
        eprintln!("{}", o.summary);
    }
}
