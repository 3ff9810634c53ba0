use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use nqs_cli::{cmd_fci, cmd_pvc, cmd_run, configure_threads, BatchKind, RunConfig, EXIT_ERROR};
use nqs_core::hamiltonian::DEFAULT_DENSE_CAP;
use nqs_core::optimizer::Method;

#[derive(Parser)]
#[command(name = "nqs", version, about = "Krylov-subspace optimizer for autoregressive neural quantum states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the ansatz and write a trajectory CSV plus a JSON summary.
    Run(RunArgs),
    /// Print the particle-number sector and its configuration count.
    Pvc {
        #[arg(long)]
        fcidump: PathBuf,
    },
    /// Dense exact diagonalization of the sector Hamiltonian.
    Fci {
        #[arg(long)]
        fcidump: PathBuf,
        /// Write ground-state amplitudes as `bits,amplitude` CSV.
        #[arg(long)]
        amplitudes: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
        cap: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Irl,
    Sl,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum BatchArg {
    Exact,
    Stochastic,
}

/// Unset flags fall back to `--config`, then to built-in defaults.
#[derive(Args)]
struct RunArgs {
    /// JSON RunConfig to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fcidump: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Krylov subspace size.
    #[arg(long)]
    m: Option<usize>,
    /// Eigensolver residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, value_enum)]
    batch: Option<BatchArg>,
    /// Samples per outer step in stochastic mode.
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden width of the amplitude and phase networks.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Zero the timing columns so identical runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.fcidump {
            cfg.fcidump_path = v;
        }
        if let Some(v) = self.method {
            cfg.method = match v {
                MethodArg::Irl => Method::Irl,
                MethodArg::Sl => Method::Sl,
                MethodArg::Adam => Method::Adam,
            };
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_outer_steps = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = match v {
                BatchArg::Exact => BatchKind::Exact,
                BatchArg::Stochastic => BatchKind::Stochastic,
            };
        }
        if let Some(v) = self.ns {
            cfg.n_samples = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = self.out_csv {
            cfg.out_csv = v;
        }
        if let Some(v) = self.out_json {
            cfg.out_json = v;
        }
        cfg.no_timing |= self.no_timing;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => {
            let summary = cmd_run(&args.into_config()?)?;
            if let Some(e) = &summary.error {
                eprintln!("error: {e}");
            }
            let err = summary
                .err_ha
                .map(|e| format!("{e:.3e}"))
                .unwrap_or_else(|| "n/a".into());
            let energy = summary
                .final_energy_ha
                .map(|e| format!("{e:.12}"))
                .unwrap_or_else(|| "n/a".into());
            println!(
                "{:?}: E = {energy} Ha, |E - E_FCI| = {err} Ha, {} steps, {} matvecs",
                summary.status, summary.steps, summary.total_matvecs
            );
            Ok(summary.status.exit_code())
        }
        Command::Pvc { fcidump } => {
            println!("{}", cmd_pvc(&fcidump)?);
            Ok(0)
        }
        Command::Fci {
            fcidump,
            amplitudes,
            cap,
        } => {
            let rep = cmd_fci(&fcidump, amplitudes.as_deref(), cap)?;
            println!("E_FCI = {:.12}", rep.energy);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
