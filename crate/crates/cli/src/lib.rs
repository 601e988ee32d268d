//! Command-line surface for the mixed-effects smoothing spline pipelines:
//! `fit`, `test`, `simulate` and `benchmark`.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mess", version, about = "Differential expression of time-course data with mixed-effects smoothing splines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit mean and individual curves for every gene and group.
    Fit {
        /// Long-format CSV: gene,group,individual,time,value.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank genes by bootstrap p-value of the L2 distance between group means.
    Test {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        fdr: Option<f64>,
    },
    /// Write a simulated dataset and its truth labels.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Simulate, score with both methods and report ROC, AUC and power.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub genes: Option<usize>,
    #[arg(long)]
    pub effect_scale: Option<f64>,
}

fn resolve(common: &Common, extra: Overrides) -> Result<RunConfig, CliError> {
    let overrides = Overrides {
        seed: common.seed,
        threads: common.threads,
        ..extra
    };
    let config = RunConfig::load(common.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&common.out)?;
    Ok(config)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Run one command and return the summary line printed on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit { input, common } => {
            let config = resolve(&common, Overrides::default())?;
            let s = in_pool(config.threads, || commands::fit(&input, &common.out, &config))??;
            Ok(format!("fitted {} genes, skipped {}", s.fitted, s.skipped))
        }
        Command::Test {
            input,
            common,
            bootstrap,
            fdr,
        } => {
            let config = resolve(
                &common,
                Overrides {
                    bootstrap,
                    fdr,
                    ..Overrides::default()
                },
            )?;
            let s = in_pool(config.threads, || commands::test(&input, &common.out, &config))??;
            Ok(format!(
                "tested {} genes, {} significant at q < {}, skipped {}, null pool {} ({} failed replicates)",
                s.tested, s.significant, config.fdr, s.skipped, s.pool_size, s.bootstrap_failures
            ))
        }
        Command::Simulate { common, sim } => {
            let config = resolve(&common, sim_overrides(&sim))?;
            let n = in_pool(config.threads, || commands::simulate(&common.out, &config))??;
            Ok(format!("simulated {n} genes"))
        }
        Command::Benchmark { common, sim } => {
            let config = resolve(&common, sim_overrides(&sim))?;
            let reports = in_pool(config.threads, || commands::benchmark(&common.out, &config))??;
            Ok(reports
                .iter()
                .map(|r| {
                    format!(
                        "{}: auc {:.4}, power {:.4} at specificity {}",
                        r.method, r.auc, r.power, config.benchmark.specificity
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"))
        }
    }
}

fn sim_overrides(sim: &SimArgs) -> Overrides {
    Overrides {
        genes: sim.genes,
        effect_scale: sim.effect_scale,
        ..Overrides::default()
    }
}
