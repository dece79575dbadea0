//! Command-line driver for the parabolic-systems laboratory: validates
//! configurations, runs solves and probes, and executes the acceptance suite.
//!
//! Exit codes: 0 on success, 1 when a probe or acceptance row fails,
//! 2 on configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use parlab::config::ExperimentConfig;
use parlab::report::ReportTable;
use parlab::suite::{self, SuiteLevel};
use parlab::Error;

#[derive(Parser)]
#[command(name = "labcli", about = "Discrete parabolic-systems laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed recorded in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parses and validates a configuration without solving anything.
    Validate(ConfigArgs),
    /// Runs the configured pipeline (solve plus any configured probes).
    Solve(ConfigArgs),
    /// Computes the averaged fundamental-solution column.
    Fundsol(ConfigArgs),
    /// Runs the configured probes (scaling, decay, fit).
    Probe(ConfigArgs),
    /// Runs the configured twisted evolutions.
    Davies(ConfigArgs),
    /// Runs the Gaussian fit over the configured window.
    Fit(ConfigArgs),
    /// Runs the acceptance suite.
    Suite {
        /// smoke or full.
        #[arg(long, default_value = "smoke")]
        level: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Narrows a configuration to the stages a subcommand exercises.
fn narrow(mut cfg: ExperimentConfig, cmd: &str) -> ExperimentConfig {
    match cmd {
        "fundsol" => {
            cfg.probes = Default::default();
            cfg.davies = None;
        }
        "probe" => {
            cfg.davies = None;
        }
        "davies" => {
            cfg.source = None;
            cfg.probes = Default::default();
        }
        "fit" => {
            cfg.probes.eps_sweep.clear();
            cfg.probes.decay_radii.clear();
            cfg.davies = None;
        }
        _ => {}
    }
    cfg
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir<'a>(args: &'a ConfigArgs, cfg: &'a ExperimentConfig) -> Option<PathBuf> {
    args.out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
}

fn finish(table: &ReportTable) -> ExitCode {
    print!("{}", table.render_text());
    if table.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = load(&args)?;
            cfg.validate()?;
            let grid = cfg.grid.build()?;
            let coeffs = cfg.coefficients.build(&grid, cfg.tolerances.drift_tol)?;
            let rep = &coeffs.report;
            println!(
                "ok: config {} (lambda {:.4}, Lambda {:.4}{})",
                cfg.hash(),
                rep.lambda,
                rep.big_lambda,
                rep.theta
                    .map(|t| format!(", Theta {t:.4}"))
                    .unwrap_or_default()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve(args) => {
            let cfg = load(&args)?;
            let table = suite::run(&cfg, out_dir(&args, &cfg).as_deref())?;
            Ok(finish(&table))
        }
        Command::Fundsol(args) => {
            let cfg = narrow(load(&args)?, "fundsol");
            let table = suite::run(&cfg, out_dir(&args, &cfg).as_deref())?;
            Ok(finish(&table))
        }
        Command::Probe(args) => {
            let cfg = narrow(load(&args)?, "probe");
            let table = suite::run(&cfg, out_dir(&args, &cfg).as_deref())?;
            Ok(finish(&table))
        }
        Command::Davies(args) => {
            let cfg = narrow(load(&args)?, "davies");
            let table = suite::run(&cfg, out_dir(&args, &cfg).as_deref())?;
            Ok(finish(&table))
        }
        Command::Fit(args) => {
            let cfg = narrow(load(&args)?, "fit");
            let table = suite::run(&cfg, out_dir(&args, &cfg).as_deref())?;
            Ok(finish(&table))
        }
        Command::Suite { level, out, seed } => {
            let level = SuiteLevel::parse(&level)?;
            let table = suite::suite(level, seed, out.as_deref().map(Path::new))?;
            Ok(finish(&table))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigError(_) | Error::InvalidConstants(_) | Error::Io(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
