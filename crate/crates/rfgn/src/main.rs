use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfgn::commands::{self, VERIFY_TOLERANCE};
use rfgn::config::RunConfig;
use rfgn::CliError;

#[derive(Parser)]
#[command(name = "rfgn", version, about = "ReFactor GNN link prediction")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train a model and write its artifact directory and metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model directory on its test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check layer/gradient-descent agreement on random graphs.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        graphs: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Train with and without the global term and compare test MRR.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn with_overrides(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = std::path::absolute(&o).unwrap_or(o);
    }
    Ok(cfg)
}

fn print_metrics(label: &str, m: &rfgn_core::eval::Metrics) {
    println!(
        "{label}: mrr {:.6} hits@1 {:.6} hits@3 {:.6} hits@10 {:.6} ({} queries)",
        m.mrr, m.hits1, m.hits3, m.hits10, m.n_queries
    );
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    rfgn::init_threads()?;
    match cli.verb {
        Verb::Train { config, seed, out } => {
            let cfg = with_overrides(&config, seed, out)?;
            let outcome = commands::train(&cfg)?;
            if let Some(m) = &outcome.valid {
                print_metrics("valid", m);
            }
            if let Some(m) = &outcome.test {
                print_metrics("test", m);
            }
            println!("artifacts in {}", cfg.out_dir.display());
        }
        Verb::Eval { model, out } => {
            let m = commands::eval(&model, out.as_deref())?;
            print_metrics("test", &m);
        }
        Verb::Verify { seed, graphs, steps } => {
            let report = commands::verify(seed, graphs, steps)?;
            println!("max divergence {:.3e}", report.max_divergence);
            let within = report.max_divergence <= VERIFY_TOLERANCE;
            if !within {
                if let Some((graph, kind, variant)) = report.worst {
                    eprintln!("worst case: graph {graph}, {kind:?}, {variant}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Verb::Ablate { config, seed, out } => {
            let cfg = with_overrides(&config, seed, out)?;
            let a = commands::ablate(&cfg)?;
            print_metrics("with global term", &a.with_global);
            print_metrics("without global term", &a.without_global);
            println!("delta mrr {:+.6}", a.delta());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
