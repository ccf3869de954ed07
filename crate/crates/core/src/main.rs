use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use vinestress::bicop::CopulaFamily;
use vinestress::pipeline::{
    cmd_benchmark, cmd_fit, cmd_simulate, cmd_stress, cmd_transform, ScenarioOverrides, DEFAULT_BENCHMARK_LEVELS,
};
use vinestress::stress::{validate_grid, StressConfig};

/// D-vine copula quantile regression and sector stress testing.
#[derive(Debug, Parser)]
#[command(name = "vinestress", version)]
struct RunConfig {
    /// More log output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Difference a PD-level panel and move it to the copula scale.
    Transform {
        /// Panel CSV: `date` (YYYY-MM) followed by one column per sector.
        #[arg(long)]
        input: PathBuf,
        /// Pseudo-observation CSV; marginals and diagnostics are written beside it.
        #[arg(long)]
        output: PathBuf,
    },
    /// Forward-select a D-vine for one response and write it as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        response: String,
        /// Candidate covariates (repeatable); all other sectors when omitted.
        #[arg(long = "covariate")]
        covariates: Vec<String>,
        #[command(flatten)]
        families: FamilyArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a stress scenario on a pseudo panel.
    Stress {
        #[arg(long)]
        input: PathBuf,
        /// Scenario JSON: {stressed, kappa, alpha_grid, lag}.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory for report.csv, plot_data.csv and provenance.json.
        #[arg(long)]
        output: PathBuf,
        /// Stress levels replacing the scenario's, comma separated.
        #[arg(long, value_delimiter = ',')]
        kappa: Option<Vec<f64>>,
        /// Reporting levels replacing the scenario's, comma separated.
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
        /// Covariate lag in months replacing the scenario's.
        #[arg(long)]
        lag: Option<usize>,
        #[command(flatten)]
        families: FamilyArgs,
        /// Let forward selection drop stressed sectors instead of forcing them in.
        #[arg(long)]
        unforced: bool,
    },
    /// Compare linear quantile, expectile and D-vine quantile regression on one pair.
    Benchmark {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        response: String,
        #[arg(long)]
        covariate: String,
        /// Levels of the fitted curves, comma separated.
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
        #[command(flatten)]
        families: FamilyArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic PD panel from a ground-truth spec.
    Simulate {
        /// Spec JSON; the bundled nine-sector spec when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct FamilyArgs {
    /// Pair-copula families to consider, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<CopulaFamily>>,
}

impl FamilyArgs {
    fn resolve(&self) -> Vec<CopulaFamily> {
        let mut f = self.families.clone().unwrap_or_else(|| CopulaFamily::ALL.to_vec());
        if !f.contains(&CopulaFamily::Independence) {
            f.insert(0, CopulaFamily::Independence);
        }
        f.dedup();
        f
    }
}

fn run(cfg: RunConfig) -> vinestress::Result<()> {
    match cfg.command {
        Command::Transform { input, output } => {
            cmd_transform(&input, &output)?;
        }
        Command::Fit {
            input,
            response,
            covariates,
            families,
            output,
        } => {
            cmd_fit(&input, &response, &covariates, &families.resolve(), &output)?;
        }
        Command::Stress {
            input,
            scenario,
            output,
            kappa,
            alpha_grid,
            lag,
            families,
            unforced,
        } => {
            let overrides = ScenarioOverrides { kappa, alpha_grid, lag };
            let config = StressConfig {
                families: families.resolve(),
                forced: !unforced,
                threads: None,
            };
            cmd_stress(&input, &scenario, &output, &overrides, &config)?;
        }
        Command::Benchmark {
            input,
            response,
            covariate,
            alpha_grid,
            families,
            output,
        } => {
            let levels = alpha_grid.unwrap_or_else(|| DEFAULT_BENCHMARK_LEVELS.to_vec());
            validate_grid(&levels)?;
            cmd_benchmark(&input, &response, &covariate, &levels, &families.resolve(), &output)?;
        }
        Command::Simulate { input, output, seed } => {
            cmd_simulate(input.as_deref(), seed, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    let level = match cfg.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
