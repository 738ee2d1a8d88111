use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fedmil::SelectionMethod;
use fedmil_cli::{emit_plot_data, inspect_kernel, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fedmil", version, about = "Federated MIL with quality-diversity client selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these methods (comma separated or repeated).
        #[arg(long, value_delimiter = ',')]
        method: Vec<SelectionMethod>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write convergence and utilization CSVs from a results directory.
    Plot {
        #[arg(long)]
        results: PathBuf,
    },
    /// Dump S, Q and the kernel spectrum for the first run of a config.
    InspectKernel {
        #[arg(long)]
        config: PathBuf,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, method, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if !method.is_empty() {
                cfg.methods = method;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let summary = run_experiment(&cfg)?;
            for c in &summary.cells {
                println!(
                    "strength {} utilization {} {}: acc {:.4} ± {:.4} over {} run(s)",
                    c.strength,
                    c.utilization,
                    c.method,
                    c.metrics.accuracy.mean,
                    c.metrics.accuracy.std,
                    c.metrics.accuracy.n
                );
            }
            println!("results in {}", cfg.out_dir.display());
        }
        Command::Plot { results } => {
            for p in emit_plot_data(&results)? {
                println!("{}", p.display());
            }
        }
        Command::InspectKernel { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = inspect_kernel(&cfg)?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(p) => std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}
