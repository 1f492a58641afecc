use anyhow::Context;
use clap::{Parser, Subcommand};
use stabledecay::experiments::ExperimentConfig;
use stabledecay_cli::run::{run_config, RunArgs};
use stabledecay_cli::suites::{run_suite, Suite, SuiteOptions, DEFAULT_SEED};
use stabledecay_cli::{seed_table, tabulate};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "stabledecay", version, about = "Boundary decay experiments for the fractional Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a property suite: constants, fraclap, sampler, moduli or barriers.
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Radii per α in the sampler suite.
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Execute an experiment config and write CSV, JSON and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Pretty-print a CSV file.
    Tabulate { path: PathBuf },
    /// Expand a master seed into the per-point seeds used by a run.
    Seeds {
        #[arg(long, conflicts_with = "config")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Take the seed and point count from a config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    Ok(b.build()?)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Verify {
            suite,
            seed,
            samples,
            threads,
            out,
        } => {
            let opts = SuiteOptions {
                seed,
                samples,
                ..SuiteOptions::default()
            };
            let rep = pool(threads)?.install(|| run_suite(suite, &opts));
            print!("{}", rep.human());
            rep.write(&out).with_context(|| format!("writing report to {}", out.display()))?;
            Ok(if rep.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            let m = run_config(&RunArgs {
                config,
                seed,
                threads,
                out: out.clone(),
            })?;
            for f in &m.files {
                println!("{}  {}", f.sha256, out.join(&f.path).display());
            }
            if let Some(s) = &m.summary {
                println!("{}", serde_json::to_string_pretty(s)?);
            }
            match m.commands.iter().find_map(|c| c.error.as_ref()) {
                Some(e) => {
                    eprintln!("error: {e}");
                    Ok(ExitCode::FAILURE)
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Tabulate { path } => {
            let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string())?;
            print!("{}", tabulate(&text)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Seeds { seed, count, config } => {
            let (master, count) = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| p.display().to_string())?;
                    let cfg = ExperimentConfig::from_json(&text)?;
                    (cfg.seed, cfg.r_ladder.len() as u64)
                }
                None => (seed.unwrap_or(DEFAULT_SEED), count),
            };
            print!("{}", seed_table(master, count));
            Ok(ExitCode::SUCCESS)
        }
    }
}
