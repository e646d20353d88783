use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use neurodecode::pipeline::{evaluate, export_conditioning, Pipeline, PipelineConfig};
use neurodecode::synth::{generate, SynthSpec};
use neurodecode::Error;

/// Decode voxel activity into latent features and score the results.
#[derive(Parser)]
#[command(name = "neurodecode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit ridge models (with CV over the alpha grid) for each branch.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Fit only this branch.
        #[arg(long)]
        branch: Option<String>,
    },
    /// Predict and renormalize test features from fitted models.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        branch: Option<String>,
    },
    /// Compute caption and image metrics into a JSON report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predicted features and generation settings as a bundle.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these branches (repeatable).
        #[arg(long)]
        branch: Vec<String>,
    },
    /// Generate a synthetic dataset from a linear encoder.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit { config, branch } => {
            let pipeline = Pipeline::new(PipelineConfig::load(&config)?)?;
            for b in pipeline.fit_all(branch.as_deref())? {
                println!("{}\talpha={}", b.name, b.model.alpha);
            }
        }
        Command::Predict { config, branch } => {
            let pipeline = Pipeline::new(PipelineConfig::load(&config)?)?;
            for status in pipeline.predict_all(branch.as_deref())? {
                match status.skipped {
                    Some(reason) => println!("{}\tskipped: {reason}", status.branch),
                    None => println!("{}\trows={}", status.branch, status.rows),
                }
            }
        }
        Command::Evaluate { config, out } => {
            let cfg = PipelineConfig::load(&config)?;
            let report = evaluate(&cfg)?;
            report.write(&out)?;
            for m in &report.metrics {
                match m.value {
                    Some(v) => println!("{}\t{v}", m.label),
                    None => println!("{}\tskipped", m.label),
                }
            }
            if report.all_skipped() {
                return Err(Error::Validation("every metric was skipped".into()));
            }
        }
        Command::Export { config, out, branch } => {
            let cfg = PipelineConfig::load(&config)?;
            let d = export_conditioning(&cfg, &branch, &out)?;
            info!("exported {} feature files to {}", d.features.len(), out.display());
        }
        Command::Synth { spec, out } => {
            let data = generate(&SynthSpec::read(&spec)?)?;
            let cfg = data.write(&out)?;
            println!("{}", cfg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    if let Some(n) = std::env::var("NEURODECODE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("could not cap threads at {n}: {e}");
        }
    }

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
