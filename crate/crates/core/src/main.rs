use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nodal_core::experiment::{self, ExperimentConfig, Severity};

#[derive(Parser)]
#[command(name = "nodal", version, about = "Clustered nodal multi-peak solutions of a coupled Schrodinger system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every eps of a config and write the artifact directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Reuse finished points and Newton checkpoints found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Report violated or marginal hypotheses without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Gather plot-ready CSV tables from a finished run.
    PlotData {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn output_dir(out: Option<PathBuf>, config: Option<&ExperimentConfig>) -> Result<PathBuf, String> {
    out.or_else(|| config.and_then(|c| c.output.clone()))
        .ok_or_else(|| "no output directory: pass --out or set `output` in the config".to_string())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Run { config, out, workers, resume } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let dir = output_dir(out, Some(&cfg))?;
            let summary = experiment::run(&cfg, &dir, workers, resume).map_err(|e| e.to_string())?;
            let failed = summary.points.iter().filter(|p| !p.errors.is_empty()).count();
            println!("wrote {} points to {} ({failed} with errors)", summary.points.len(), dir.display());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let diagnostics = experiment::validate(&cfg);
            for d in &diagnostics {
                println!("{d}");
            }
            if diagnostics.is_empty() {
                println!("ok");
            }
            let bad = diagnostics.iter().any(|d| d.severity == Severity::Error);
            Ok(if bad { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::PlotData { out, config } => {
            let cfg = config.map(|p| ExperimentConfig::load(&p)).transpose().map_err(|e| e.to_string())?;
            let dir = output_dir(out, cfg.as_ref())?;
            for path in experiment::plot_data(&dir).map_err(|e| e.to_string())? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
