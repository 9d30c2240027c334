use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cellfree::detect::Detector;
use cellfree::harness::{run_sweep, write_csv, SimConfig};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO uplink FER simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the FER sweep and write CSV.
    Sweep(Common),
    /// Run the built-in oracle and invariant checks.
    Validate(Common),
    /// Print the resolved configuration as TOML.
    Describe(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated detectors, e.g. `mrc,zf_df,pm(2),c_pm(4)`.
    #[arg(long)]
    detectors: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(list) = &self.detectors {
            cfg.detection.detectors = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse::<Detector>)
                .collect::<cellfree::Result<_>>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let records = run_sweep(&cfg)?;
            write_csv(&records, cfg.report_all_users, args.output()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            let cfg = args.resolve()?;
            let checks = cellfree::validate::run_all(cfg.seed);
            let mut out = args.output()?;
            for c in &checks {
                writeln!(out, "{c}")?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            writeln!(out, "{} passed, {failed} failed", checks.len() - failed)?;
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Describe(args) => {
            let cfg = args.resolve()?;
            write!(args.output()?, "{}", cfg.to_toml()?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
