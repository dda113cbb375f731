//! CSV artifacts and the run manifest.

use gravlink_core::master::{moments_of, PhaseSpace};
use gravlink_core::C64;
use nalgebra::DMatrix;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Shortest round-trip formatting; identical inputs give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Column names `x1, p1, x2, …` of the quadratures of `n_modes` modes.
pub fn quadrature_names(n_modes: usize) -> Vec<String> {
    (1..=n_modes).flat_map(|k| [format!("x{k}"), format!("p{k}")]).collect()
}

/// Header of `moments.csv`: means, then the upper triangle of the covariance.
pub fn moments_header(n_modes: usize) -> Vec<String> {
    let q = quadrature_names(n_modes);
    let mut h = vec!["t".to_string()];
    h.extend(q.iter().map(|c| format!("mean_{c}")));
    for a in 0..q.len() {
        for b in a..q.len() {
            h.push(format!("cov_{}_{}", q[a], q[b]));
        }
    }
    h
}

pub fn moments_row(t: f64, rho: &DMatrix<C64>, phase: &PhaseSpace) -> Vec<String> {
    let m = moments_of(rho, phase);
    let mut row = vec![num(t)];
    row.extend(m.mean.iter().map(|v| num(*v)));
    for a in 0..m.cov.nrows() {
        for b in a..m.cov.ncols() {
            row.push(num(m.cov[(a, b)]));
        }
    }
    row
}

pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()
}

/// `t,i,j,re,im` rows for the upper triangle of each stored state.
pub fn write_rho_snapshots(path: &Path, times: &[f64], states: &[DMatrix<C64>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "i", "j", "re", "im"])?;
    for (t, rho) in times.iter().zip(states) {
        for i in 0..rho.nrows() {
            for j in i..rho.ncols() {
                let v = rho[(i, j)];
                w.write_record([num(*t), i.to_string(), j.to_string(), num(v.re), num(v.im)])?;
            }
        }
    }
    w.flush()
}

/// Everything needed to reproduce a run, written as `run_manifest.txt`.
pub struct Manifest<'a> {
    pub command: &'a str,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub files: &'a [PathBuf],
    pub notes: &'a [String],
    pub config: Option<&'a str>,
    pub wall_time: Duration,
}

pub const MANIFEST: &str = "run_manifest.txt";

impl Manifest<'_> {
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST);
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "gravlink {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(f, "command = {}", self.command)?;
        if let Some(s) = self.seed {
            writeln!(f, "seed = {s}")?;
        }
        if let Some(t) = self.threads {
            writeln!(f, "threads = {t}")?;
        }
        writeln!(f, "wall_time_s = {:.3}", self.wall_time.as_secs_f64())?;
        for p in self.files {
            writeln!(f, "file = {}", p.file_name().map(|s| s.to_string_lossy()).unwrap_or_default())?;
        }
        for n in self.notes {
            writeln!(f, "note = {n}")?;
        }
        if let Some(c) = self.config {
            writeln!(f, "--- config ---")?;
            f.write_all(c.as_bytes())?;
            if !c.ends_with('\n') {
                writeln!(f)?;
            }
        }
        Ok(path)
    }
}
