use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use collabloc::sim::experiment::{run_experiment, ExperimentSpec, SEED_ENV};
use collabloc::sim::export::write_world_dir;
use collabloc::sim::report::{report_dir, verify_dir, write_output_dir};
use collabloc::sim::WorldConfig;

#[derive(Parser)]
#[command(version, about = "Collaborative localization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world, its provider fleet and their databases.
    GenWorld {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment sweep and write results.csv, cells.csv, report.csv and traces.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate results.csv into report.csv.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Re-check the privacy contract on the traces of a run.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?}"))?)),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::GenWorld { config, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = WorldConfig::from_toml(&text)?;
            if let Some(seed) = seed_override()? {
                cfg.seed = seed;
            }
            let export = write_world_dir(&cfg, &out)?;
            println!("world {} with {} places written to {}", export.digest, export.places, out.display());
            for (id, n) in &export.databases {
                println!("  {id}: {n} entries");
            }
        }
        Command::Run { spec, out } => {
            let mut s = ExperimentSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            s.apply_seed_override()?;
            let output = run_experiment(&s)?;
            write_output_dir(&output, &out)?;
            for c in output.cells.iter().filter(|c| c.skipped.is_some()) {
                println!("skipped {}: {}", c.cell.id, c.skipped.as_deref().unwrap_or_default());
            }
            println!("{} runs over {} cells written to {}", output.results.len(), output.report.cells.len(), out.display());
        }
        Command::Report { input } => {
            let report = report_dir(&input)?;
            println!(
                "{:<16} {:>3} {:>3} {:>5} {:>5} {:>9} {:>5} {:>17} {:>17} {:>6}",
                "cell", "n", "k", "p1", "p2", "weighting", "clf", "room", "building", "r"
            );
            for c in &report.cells {
                println!(
                    "{:<16} {:>3} {:>3} {:>5} {:>5.2} {:>9} {:>5} {:>8.3} ± {:<6.3} {:>8.3} ± {:<6.3} {:>6.2}",
                    c.cell_id,
                    c.n,
                    c.k,
                    c.p1,
                    c.p2,
                    c.weighting.to_string(),
                    c.classifier.to_string(),
                    c.room_acc, c.room_hw, c.building_acc, c.building_hw, c.r_mean
                );
            }
        }
        Command::Verify { input } => {
            let mut clean = true;
            for (cell, rep) in verify_dir(&input)? {
                println!("{cell}: {} requests, {} hops, {} violations", rep.requests, rep.hops, rep.violations.len());
                for v in &rep.violations {
                    println!("  {v}");
                }
                clean &= rep.is_clean();
            }
            if !clean {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
