use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtmv_core::config::ExperimentConfig;
use mtmv_core::embed::{embedding_cost_matrix, spectral_embed};
use mtmv_core::eval::cross_propagation;
use mtmv_core::experiment::run_experiment;
use mtmv_core::io::{load_labels, load_matrix, save_matrix};
use mtmv_core::model::{signed_label_matrix, LabelState, Task};
use mtmv_core::oracle::run_fixture;
use mtmv_core::weights::WeightGraph;
use mtmv_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mtmv", version, about = "Graph transduction over multiple views and tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral embedding of a saved weight matrix.
    Embed {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-propagation report for a saved weight matrix and label file.
    Cp {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 2)]
        z: usize,
    },
    /// Compare the fast solvers with brute-force references.
    Oracle {
        #[arg(long)]
        fixture: String,
    },
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            let report = run_experiment(&cfg)?;
            println!(
                "trials={} error_rate={:.4}±{:.4} f1_micro={:.4}±{:.4} out={}",
                report.per_trial.len(),
                report.error_rate.mean,
                report.error_rate.std,
                report.f1_micro.mean,
                report.f1_micro.std,
                cfg.out.display()
            );
        }
        Command::Embed { weights, dim, out } => {
            let graph = WeightGraph::from_matrix(load_matrix(&weights)?)?;
            let emb = spectral_embed(&embedding_cost_matrix(&graph), dim)?;
            save_matrix(&out, &emb.coords)?;
            println!("cost={:e} eigenvalues={:?}", emb.cost, emb.eigenvalues);
        }
        Command::Cp { weights, labels, z } => {
            let graph = WeightGraph::from_matrix(load_matrix(&weights)?)?;
            let columns = load_labels(&labels)?;
            let states = columns
                .into_iter()
                .map(|col| {
                    let c = col.iter().flatten().max().map_or(0, |m| m + 1);
                    LabelState::from_task(&Task::new(col, c)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = cross_propagation(&graph, &signed_label_matrix(&states), z)?;
            println!("{}", json(&report));
        }
        Command::Oracle { fixture } => {
            println!("{}", json(&run_fixture(&fixture)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numeric() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}
