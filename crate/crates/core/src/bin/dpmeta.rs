use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpmeta::harness::{self, ExperimentConfig, SweepAxis};
use dpmeta::{Error, Result};

/// Private meta-learning experiments on synthetic task environments.
#[derive(Parser)]
#[command(name = "dpmeta", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed. Overrides DPMETA_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print derived constants (n, sigma^2, gamma, eta, DP ledger) without running.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Meta-train once and evaluate all arms.
    Run {
        #[command(flatten)]
        common: Common,
        /// Result CSV; a `.calibration` sidecar is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat `run` over ascending values of one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of V, m, T_train, epsilon.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    } else if let Ok(s) = std::env::var("DPMETA_SEED") {
        cfg.master_seed = s.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("DPMETA_SEED `{s}` is not an unsigned integer"))
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Calibrate { common } => {
            let cfg = load(&common)?;
            print!("{}", harness::calibrate(&cfg)?);
        }
        Cmd::Run { common, out } => {
            let mut cfg = load(&common)?;
            if out.is_some() {
                cfg.output_path = out;
            }
            let report = harness::run_experiment(&cfg)?;
            print!("{}", report.summary_text());
            if let Some(p) = &cfg.output_path {
                eprintln!("wrote {}", p.display());
            }
        }
        Cmd::Sweep {
            common,
            axis,
            values,
            out,
        } => {
            let mut cfg = load(&common)?;
            if out.is_some() {
                cfg.output_path = out;
            }
            for r in harness::sweep(&cfg, axis, &values)? {
                println!("[{} = {}]", axis.as_str(), r.axis_value.unwrap_or(f64::NAN));
                print!("{}", r.summary_text());
            }
            if let Some(p) = &cfg.output_path {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
