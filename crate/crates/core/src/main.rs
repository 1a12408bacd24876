use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sigdetect::cli::{error_json, run, RunArgs};

/// Signal-fraction estimation and testing under an unknown background.
#[derive(Debug, Parser)]
#[command(name = "sigdetect", version)]
struct Args {
    /// JSON analysis configuration.
    #[arg(long)]
    config: PathBuf,
    /// Physics sample, one value per line.
    #[arg(long)]
    physics: Option<PathBuf>,
    /// Background-only sample (mode with_background).
    #[arg(long)]
    background: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for simulations.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let args = RunArgs {
        config: a.config,
        physics: a.physics,
        background: a.background,
        seed: a.seed,
        workers: a.workers,
        out: a.out,
    };
    match run(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(2)
        }
    }
}
