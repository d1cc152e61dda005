use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnp_cli::{parse_config_with, run_convergence_study, run_experiment, CliError, ExperimentConfig};
use serde_json::json;

/// Positivity-preserving Poisson-Nernst-Planck simulations.
#[derive(Parser)]
#[command(name = "pnp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write diagnostics, snapshots and a summary.
    Run(Common),
    /// Run a convergence study and write its rate table.
    Study(Common),
    /// Check a config and print its canonical form.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (JSON).
    config: PathBuf,
    /// Output directory; replaces `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Set a config value, e.g. `--override grid.nodes=64`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(&self.config).map_err(|source| CliError::Read {
            path: self.config.clone(),
            source,
        })?;
        let mut cfg = parse_config_with(&text, &self.overrides)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))
    }
}

fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    match &cli.command {
        Command::Validate(args) => Ok(serde_json::to_value(args.load()?).expect("config serializes")),
        Command::Run(args) => {
            let cfg = args.load()?;
            let summary = args.pool()?.install(|| run_experiment(&cfg, &args.overrides))?;
            Ok(json!({
                "status": "ok",
                "output_dir": cfg.output_dir,
                "steps": summary.steps,
                "errors": summary.errors,
            }))
        }
        Command::Study(args) => {
            let cfg = args.load()?;
            let summary = args.pool()?.install(|| run_convergence_study(&cfg, &args.overrides))?;
            Ok(json!({
                "status": "ok",
                "output_dir": cfg.output_dir,
                "levels": summary.levels,
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("json output"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", e.to_json());
            ExitCode::from(match e {
                CliError::Config(_) | CliError::Read { .. } => 2,
                _ => 1,
            })
        }
    }
}
