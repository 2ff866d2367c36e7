use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use tsensemble::experiment::{self, CompareOptions, ExperimentConfig, Summary};

#[derive(Parser)]
#[command(
    name = "tsensemble",
    version,
    about = "Neural-network ensemble forecasting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report files.
    Run {
        config: PathBuf,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Epoch budget for every trainer.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Tabulate MSE and MAPE from one or more report.json files (or run
    /// directories containing one).
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Multiply MSE by each dataset's display scale.
        #[arg(long)]
        scale_mse: bool,
        /// Add a column per trainer.
        #[arg(long)]
        trainers: bool,
        /// Write the table here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            restarts,
            epochs,
            out_dir,
        } => {
            let mut c = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(r) = restarts {
                anyhow::ensure!(r > 0, "--restarts must be at least 1");
                c.restarts = r;
            }
            if let Some(e) = epochs {
                c.set_epochs(e);
            }
            if let Some(d) = out_dir {
                c.output_dir = d;
            }
            let report = experiment::run_experiment(&c)?;
            let files = report.write(&c.output_dir)?;
            print!("{}", report.text());
            for f in files {
                info!("wrote {}", f.display());
            }
        }
        Command::Compare {
            reports,
            scale_mse,
            trainers,
            output,
        } => {
            let summaries = reports
                .iter()
                .map(|p| read_summary(p))
                .collect::<Result<Vec<_>>>()?;
            let table = experiment::compare_table(
                &summaries,
                CompareOptions {
                    scale_mse,
                    trainers,
                },
            );
            match output {
                Some(path) => experiment::write_atomic(&path, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn read_summary(path: &Path) -> Result<Summary> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    Summary::from_report_json(&text).with_context(|| format!("in {}", file.display()))
}
