//! Run configuration, output writers and subcommand bodies for the `nqs`
//! binary.
//!
//! Energies stay in Hartree until they are written; kcal/mol appears only in
//! the CSV and JSON outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use nqs_core::ansatz::{Ansatz, Architecture};
use nqs_core::estimators::BatchMode;
use nqs_core::hamiltonian::{read_fcidump, MolecularIntegrals};
use nqs_core::hilbert::{Sector, DEFAULT_ENUMERATION_CAP};
use nqs_core::krylov::{irl_smallest, IrlConfig};
use nqs_core::optimizer::{run_optimization, Method, OptimizerConfig, TrajectoryRecord};
use nqs_core::HARTREE_TO_KCAL;

pub const CSV_HEADER: &str = "step,energy_ha,err_ha,err_kcal,lambda_min,step_scale,matvecs,wall_ms";

pub const EXIT_CONVERGED: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchKind {
    Exact,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub fcidump_path: PathBuf,
    pub method: Method,
    pub m: usize,
    pub tol: f64,
    pub max_outer_steps: usize,
    pub batch: BatchKind,
    pub n_samples: usize,
    pub seed: u64,
    pub hidden: usize,
    pub out_csv: PathBuf,
    pub out_json: PathBuf,
    /// Write zeros in place of wall-clock times so reruns are byte-identical.
    pub no_timing: bool,
    /// Everything else the optimizer takes; `method`, `m`, `tol`,
    /// `max_outer_steps`, `batch` and `seed` above override it.
    pub optimizer: OptimizerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            fcidump_path: PathBuf::from("h2.fcidump"),
            method: opt.method,
            m: opt.m,
            tol: opt.tol,
            max_outer_steps: opt.max_outer_steps,
            batch: BatchKind::Exact,
            n_samples: 10_000,
            seed: opt.seed,
            hidden: 42,
            out_csv: PathBuf::from("trajectory.csv"),
            out_json: PathBuf::from("summary.json"),
            no_timing: false,
            optimizer: opt,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Optimizer configuration with the top-level fields applied.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        let mut opt = self.optimizer.clone();
        opt.method = self.method;
        opt.m = self.m;
        opt.tol = self.tol;
        opt.max_outer_steps = self.max_outer_steps;
        opt.seed = self.seed;
        opt.batch = match self.batch {
            BatchKind::Exact => BatchMode::Exact,
            BatchKind::Stochastic => BatchMode::Stochastic {
                n_samples: self.n_samples,
                seed: self.seed,
            },
        };
        opt
    }

    /// Copy with `optimizer` synchronised to the top-level fields, as echoed
    /// into the summary.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.optimizer = self.optimizer_config();
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeInfo {
    pub n_spin_orbitals: usize,
    pub n_electrons: usize,
    pub n_up: usize,
    pub n_down: usize,
    pub pvc: u128,
}

impl MoleculeInfo {
    fn new(ham: &MolecularIntegrals, sector: &Sector) -> Self {
        Self {
            n_spin_orbitals: sector.n_spin_orbitals,
            n_electrons: ham.n_electrons,
            n_up: sector.n_up,
            n_down: sector.n_down,
            pvc: sector.size(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
    Error,
}

impl RunStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            RunStatus::Converged => EXIT_CONVERGED,
            RunStatus::NotConverged => EXIT_NOT_CONVERGED,
            RunStatus::Error => EXIT_ERROR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub molecule: MoleculeInfo,
    pub n_params: usize,
    /// Absent only when the run failed before its first energy.
    pub final_energy_ha: Option<f64>,
    pub e_fci_ha: Option<f64>,
    pub err_ha: Option<f64>,
    pub err_kcal: Option<f64>,
    /// Outer steps taken; the CSV has `steps + 1` data rows.
    pub steps: usize,
    pub total_matvecs: usize,
    /// Sum of the `wall_ms` column, in seconds.
    pub wall_seconds: f64,
    pub converged: bool,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: RunConfig,
}

/// Energies and errors: 17 significant digits.
fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

pub fn csv_row(r: &TrajectoryRecord, no_timing: bool) -> String {
    let wall = if no_timing { 0.0 } else { r.wall_ms };
    format!(
        "{},{},{},{},{},{},{},{:.3}",
        r.step,
        sci(r.energy),
        opt_sci(r.err_ha),
        opt_sci(r.err_kcal),
        opt_sci(r.lambda_min),
        sci(r.step_scale),
        r.matvecs,
        wall
    )
}

/// Trajectory CSV, flushed after every row.
pub struct CsvWriter {
    out: BufWriter<File>,
    no_timing: bool,
}

impl CsvWriter {
    pub fn create(path: &Path, no_timing: bool) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
        Ok(Self { out, no_timing })
    }

    pub fn append(&mut self, r: &TrajectoryRecord) -> std::io::Result<()> {
        writeln!(self.out, "{}", csv_row(r, self.no_timing))?;
        self.out.flush()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_hamiltonian(path: &Path) -> Result<MolecularIntegrals> {
    read_fcidump(path).with_context(|| format!("reading FCIDUMP {}", path.display()))
}

/// Sectors up to this size get a dense reference; larger ones a Krylov one.
pub const DENSE_REFERENCE_LIMIT: usize = 2_000;

/// Exact ground-state energy of the sector: dense diagonalization for small
/// sectors, the matrix-free IRL solver on the sparse sector Hamiltonian up to
/// the enumeration cap, `None` beyond it.
pub fn reference_energy(ham: &MolecularIntegrals, sector: &Sector) -> Result<Option<f64>> {
    let size = sector.size();
    if size <= DENSE_REFERENCE_LIMIT as u128 {
        return Ok(Some(ham.dense_fci_ground_state(sector)?.energy));
    }
    if size > DEFAULT_ENUMERATION_CAP as u128 {
        log::info!("sector of {size} configurations too large for a reference energy");
        return Ok(None);
    }
    let op = ham.sparse_matrix(sector, DEFAULT_ENUMERATION_CAP)?;
    let solve = irl_smallest(&op, &IrlConfig { tol: 1e-10, ..IrlConfig::default() })?;
    if !solve.converged {
        log::warn!("reference eigensolve stopped at residual {:e}", solve.pair.residual);
    }
    Ok(Some(solve.pair.lambda))
}

/// Executes one optimization run and writes its CSV and JSON outputs.
///
/// Setup failures (unreadable FCIDUMP, bad sector, bad config) return `Err`
/// before any file is created. Once the CSV exists, failures are reported
/// through a summary with status `error`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    let cfg = cfg.resolved();
    let opt = cfg.optimizer_config();
    opt.validate()?;
    let ham = load_hamiltonian(&cfg.fcidump_path)?;
    let sector = ham.sector()?;
    let ansatz = Ansatz::new(Architecture::new(sector.n_spin_orbitals, cfg.hidden), sector)?;
    let reference = reference_energy(&ham, &sector)?;
    let theta0 = ansatz.init_params(cfg.seed);

    let mut csv = CsvWriter::create(&cfg.out_csv, cfg.no_timing)?;
    let mut io_error = None;
    let traj = run_optimization(&ansatz, &ham, theta0, &opt, reference, |r| {
        if io_error.is_none() {
            io_error = csv.append(r).err();
        }
    });

    let last = traj.final_record();
    let err_ha = last.and_then(|r| r.err_ha);
    let wall_ms: f64 = if cfg.no_timing {
        0.0
    } else {
        traj.records.iter().map(|r| r.wall_ms).sum()
    };
    let error = match (&traj.failure, io_error) {
        (Some(e), _) => Some(e.to_string()),
        (None, Some(e)) => Some(format!("writing {}: {e}", cfg.out_csv.display())),
        (None, None) => None,
    };
    let status = if error.is_some() {
        RunStatus::Error
    } else if traj.converged {
        RunStatus::Converged
    } else {
        RunStatus::NotConverged
    };
    let summary = RunSummary {
        molecule: MoleculeInfo::new(&ham, &sector),
        n_params: ansatz.n_params(),
        final_energy_ha: last.map(|r| r.energy),
        e_fci_ha: reference,
        err_ha,
        err_kcal: err_ha.map(|e| e * HARTREE_TO_KCAL),
        steps: traj.steps(),
        total_matvecs: traj.total_matvecs(),
        wall_seconds: wall_ms / 1e3,
        converged: traj.converged,
        status,
        error,
        config: cfg.clone(),
    };
    write_json(&cfg.out_json, &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PvcReport {
    pub n_spin_orbitals: usize,
    pub n_up: usize,
    pub n_down: usize,
    pub pvc: u128,
}

impl std::fmt::Display for PvcReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "M={} N_up={} N_down={} PVC={}",
            self.n_spin_orbitals, self.n_up, self.n_down, self.pvc
        )
    }
}

pub fn cmd_pvc(fcidump: &Path) -> Result<PvcReport> {
    let ham = load_hamiltonian(fcidump)?;
    let sector = ham.sector()?;
    Ok(PvcReport {
        n_spin_orbitals: sector.n_spin_orbitals,
        n_up: sector.n_up,
        n_down: sector.n_down,
        pvc: sector.size(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FciReport {
    pub energy: f64,
    pub dimension: usize,
    pub seconds: f64,
}

/// Dense FCI energy; with `amplitudes`, also writes `bits,amplitude` lines in
/// enumeration order.
pub fn cmd_fci(fcidump: &Path, amplitudes: Option<&Path>, cap: usize) -> Result<FciReport> {
    let ham = load_hamiltonian(fcidump)?;
    let sector = ham.sector()?;
    let t0 = Instant::now();
    let sol = ham.dense_fci_ground_state_with_cap(&sector, cap)?;
    let seconds = t0.elapsed().as_secs_f64();
    if let Some(path) = amplitudes {
        let mut out = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(out, "bits,amplitude")?;
        for (c, a) in sol.configs.iter().zip(&sol.amplitudes) {
            writeln!(out, "{:#0width$b},{}", c.bits(), sci(*a), width = sector.n_spin_orbitals + 2)?;
        }
        out.flush()?;
    }
    Ok(FciReport {
        energy: sol.energy,
        dimension: sol.configs.len(),
        seconds,
    })
}

/// Caps the global rayon pool from `NQS_THREADS`; no-op when unset or in a
/// sequential build.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NQS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("NQS_THREADS={raw:?} is not a thread count"))?;
    if n == 0 {
        anyhow::bail!("NQS_THREADS must be at least 1");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the rayon pool")?;
    Ok(())
}
