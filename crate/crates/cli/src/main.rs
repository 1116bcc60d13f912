use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rmwaft::config::{RunConfig, Track};
use rmwaft::dataset::{load_dataset, write_dataset};
use rmwaft::diagnostics::km_and_cloglog;
use rmwaft::orchestrate::{apply_overrides, orchestrate, threads_from_env, RunOptions};
use rmwaft::report::{export_report, num};
use rmwaft::simulate::{simulate, SimulationSpec};
use rmwaft_core::MixingFamily;

/// Rate-mixture Weibull AFT survival models: Bayesian and classical fits.
///
/// Worker threads are taken from RMWAFT_THREADS when set.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Which estimation track to run.
    #[arg(long, global = true, value_enum)]
    track: Option<Track>,
    /// 600,000 iterations, 25% burn-in, 9,000 retained draws.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model of the config.
    Fit {
        /// Model label, e.g. RME-IG or Weibull.
        #[arg(long)]
        model: String,
        /// Prior mean of cv; defaults to the first value in the config.
        #[arg(long)]
        expected_cv: Option<f64>,
    },
    /// Fit every (model, E(cv)) cell of the config.
    Compare,
    /// Export Kaplan–Meier and log(−log S) series.
    Diagnose {
        /// Covariate to stratify by.
        #[arg(long)]
        group: Option<String>,
    },
    /// Write a synthetic dataset.
    Simulate {
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// none, gamma, inverse-gaussian, log-normal, exponential-one
        #[arg(long, default_value = "gamma")]
        family: String,
        /// Intercept first, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "3,-0.3"
        )]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        theta: Option<f64>,
        /// Expected share of censored rows.
        #[arg(long, default_value_t = 0.3)]
        censoring: f64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("--config is required for this command")
    };
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(&mut cfg, cli.seed, cli.track, cli.out.clone());
    Ok(cfg)
}

fn run_cells(cli: &Cli, cfg: &RunConfig) -> Result<ExitCode> {
    let options = RunOptions {
        paper_scale: cli.paper_scale,
        threads: threads_from_env()?,
    };
    let results = orchestrate(cfg, &options)?;
    let files = export_report(&results)?;
    for f in &files {
        println!("{}", f.display());
    }
    for c in &results.bayes {
        if let Err(e) = &c.outcome {
            eprintln!("{}: {e}", c.spec.label());
        }
    }
    for c in &results.classical {
        if let Err(e) = &c.outcome {
            eprintln!("{} (classical): {e}", c.model);
        }
    }
    Ok(if results.failures() > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit { model, expected_cv } => {
            let mut cfg = load_config(&cli)?;
            cfg.restrict(model, *expected_cv)?;
            run_cells(&cli, &cfg)
        }
        Command::Compare => {
            let cfg = load_config(&cli)?;
            run_cells(&cli, &cfg)
        }
        Command::Diagnose { group } => {
            let cfg = load_config(&cli)?;
            let loaded = load_dataset(&cfg.dataset.path, &cfg.dataset.schema)?;
            let column = group
                .as_ref()
                .map(|g| {
                    loaded
                        .data
                        .covariate_names()
                        .iter()
                        .position(|n| n == g)
                        .with_context(|| format!("no covariate `{g}`"))
                })
                .transpose()?;
            let (series, warnings) = km_and_cloglog(&loaded.data, column);
            for w in warnings {
                eprintln!("warning: {w}");
            }
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("diagnostics.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["series", "x", "y"])?;
            for s in &series {
                for (x, y) in s.x.iter().zip(&s.y) {
                    w.write_record([s.label.clone(), num(*x), num(*y)])?;
                }
            }
            w.flush()?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            n,
            family,
            beta,
            gamma,
            theta,
            censoring,
        } => {
            let family = MixingFamily::from_label(family)
                .with_context(|| format!("unknown family `{family}`"))?;
            let theta = match (family.has_theta(), theta) {
                (true, None) => Some(2.0),
                (_, t) => *t,
            };
            let spec = SimulationSpec {
                n: *n,
                family,
                beta: beta.clone(),
                gamma: *gamma,
                theta,
                censoring: *censoring,
            };
            let data = simulate(&spec, cli.seed.unwrap_or(0))?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&out)?;
            let path = out.join("simulated.csv");
            write_dataset(&path, &data, None)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
