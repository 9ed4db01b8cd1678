use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hdiv_cli::analyze::{cmd_analyze, AnalyzeOptions, InputFiles, DEFAULT_ALPHA, DEFAULT_K, DEFAULT_REFIT_PVALUE};
use hdiv_cli::campaign::cmd_simulate;
use hdiv_cli::config::{CampaignConfig, Method, StageTuning};
use hdiv_cli::pipeline::PipelineOptions;
use hdiv_cli::qq::cmd_qqdata;
use hdiv_cli::{CliError, CliResult};

/// Sparse two-stage instrumental-variable regression with FDR/FDV-controlled
/// covariate selection.
///
/// Logs go to standard error (set RUST_LOG=debug for more); results go to
/// files only. Exit codes: 0 success, 1 usage or config error, 2 data error,
/// 3 more than 5% of replications failed.
#[derive(Parser, Debug)]
#[command(name = "hdiv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation campaign; writes summary.csv and raw.csv.
    Simulate {
        config: PathBuf,
        /// Output directory [default: config `output`, else ./results]
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads [default: config `workers`, else all cores]
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sorted statistics of chosen coordinates against normal quantiles,
    /// with parameters held fixed across replications.
    Qqdata {
        config: PathBuf,
        /// 0-based coordinates, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        coordinates: Vec<usize>,
        /// iv or naive
        #[arg(long, default_value = "iv")]
        method: Method,
        #[arg(long, default_value = "qq.csv")]
        output: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Analyze response, covariate and instrument CSV files; writes
    /// coefficients.csv, thresholds.csv and r2.csv.
    Analyze {
        /// Response, one column
        #[arg(long)]
        y: PathBuf,
        /// Covariates, n × p
        #[arg(long)]
        x: PathBuf,
        /// Instruments, n × q (standardized internally)
        #[arg(long)]
        z: PathBuf,
        /// The first row of every file is a header
        #[arg(long)]
        header: bool,
        /// FDR level
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// FDV level (expected number of false discoveries)
        #[arg(long, default_value_t = DEFAULT_K)]
        k: f64,
        /// p-value cutoff selecting covariates for the refits
        #[arg(long, default_value_t = DEFAULT_REFIT_PVALUE)]
        refit_pvalue: f64,
        /// quantile, universal, cv or cvK
        #[arg(long, default_value = "quantile")]
        first_stage: StageTuning,
        #[arg(long, default_value = "quantile")]
        second_stage: StageTuning,
        /// Seed for cross-validation folds
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "analysis")]
        output: PathBuf,
    },
}

fn workers(flag: Option<usize>, config: &CampaignConfig) -> CliResult<usize> {
    match flag.or(config.workers) {
        Some(0) => Err(CliError::Usage("workers must be at least 1".into())),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, output, workers: w } => {
            let config = CampaignConfig::load(&config)?;
            let output = output.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
            cmd_simulate(&config, workers(w, &config)?, &output)?;
        }
        Command::Qqdata { config, coordinates, method, output, workers: w } => {
            let config = CampaignConfig::load(&config)?;
            cmd_qqdata(&config, &coordinates, method, workers(w, &config)?, &output)?;
        }
        Command::Analyze { y, x, z, header, alpha, k, refit_pvalue, first_stage, second_stage, seed, output } => {
            let options = AnalyzeOptions {
                alpha,
                k,
                refit_pvalue,
                pipeline: PipelineOptions {
                    first_stage: first_stage.tuning(seed),
                    second_stage: second_stage.tuning(seed),
                    ..PipelineOptions::default()
                },
            };
            cmd_analyze(&InputFiles { y, x, z, header }, &options, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
