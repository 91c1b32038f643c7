use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use skipring::latency::{LatencyKind, LatencyModel};
use skipring_cli::commands::{
    bounds, load_dataset, optimal_tskip_report, reference_models, sweep, train_on, write_bounds,
    write_training, SweepMode,
};
use skipring_cli::config::Axis;
use skipring_cli::{CliError, Result, RunConfig};

/// Straggler-skipping token-ring SGD: bounds, timeouts, training and sweeps.
#[derive(Debug, Parser)]
#[command(name = "skipring", version)]
struct Cli {
    /// TOML run configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed, replacing the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expected latency, convergence bound and epsilon over the hop grid.
    Bounds,
    /// Timeout minimizing the mean time between token updates.
    OptimalTskip {
        /// Latency model; without it the three reference models are reported.
        #[arg(long)]
        kind: Option<LatencyKind>,
        #[arg(long, requires = "kind")]
        param1: Option<f64>,
        #[arg(long, requires = "kind")]
        param2: Option<f64>,
        /// Communication latency per hop in seconds.
        #[arg(long)]
        chi: Option<f64>,
    },
    /// Simulate training for every seed.
    Train,
    /// Repeat `bounds` or `train` for several values of one config field.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long, default_value = "bounds")]
        mode: String,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Bounds => {
            let cfg = resolve_config(&cli)?;
            let path = cfg.out_dir.join("bounds.csv");
            write_bounds(&path, &cfg, &bounds(&cfg)?)?;
            println!("{}", path.display());
        }
        Command::OptimalTskip {
            kind,
            param1,
            param2,
            chi,
        } => {
            let (models, default_chi) = match (kind, &cli.config) {
                (Some(k), _) => {
                    let p1 = param1.ok_or_else(|| CliError::Usage("--param1 is required with --kind".into()))?;
                    (vec![LatencyModel::from_params(*k, p1, param2.unwrap_or(0.0))?], 0.01)
                }
                (None, Some(_)) => {
                    let cfg = resolve_config(&cli)?;
                    (vec![cfg.latency_model()?], cfg.chi)
                }
                (None, None) => (reference_models(), 0.01),
            };
            print!("{}", optimal_tskip_report(&models, chi.unwrap_or(default_chi))?);
        }
        Command::Train => {
            let cfg = resolve_config(&cli)?;
            let data = load_dataset(&cfg)?;
            let records = train_on(&cfg, &data)?;
            for path in write_training(&cfg.out_dir, &cfg, &records)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep { axis, values, mode } => {
            let cfg = resolve_config(&cli)?;
            let axis: Axis = axis.parse()?;
            let mode: SweepMode = mode.parse()?;
            let cells = sweep(&cfg, axis, values, mode, &cfg.out_dir)?;
            for c in cells {
                println!("{}", c.path.display());
            }
            println!("{}", cfg.out_dir.join("index.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
