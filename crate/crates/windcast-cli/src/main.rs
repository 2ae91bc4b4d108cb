//! `windcast`: probabilistic trajectory forecasts of regional wind power.
//!
//! Subcommands: `synth` (generate test data), `fit` (posterior checkpoint for
//! one origin), `predict` (ensemble for one origin), `backtest` (rolling
//! fit/predict/score), `verify` (score stored ensembles).
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use windcast::model::Postproc;
use windcast::pipeline::{self, Variant};
use windcast::synth::{self, Scenario, SynthConfig};
use windcast::{Error, Result};

use config::{load_config_file, parse_time, CommonOpts};

#[derive(Parser)]
#[command(name = "windcast", version, about = "Probabilistic regional wind power trajectory forecasts")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic NWP + production CSVs from the model's own process.
    Synth {
        /// Output directory for nwp.csv, production.csv and truth.json.
        #[arg(long)]
        out: PathBuf,
        /// Trajectory length in hours (max 24 for CSV emission).
        #[arg(long, default_value_t = 24)]
        t: usize,
        /// Number of daily forecast cases.
        #[arg(long, default_value_t = 465)]
        days: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Error shape: well_specified | heavy_tails
        #[arg(long, default_value = "well_specified")]
        scenario: String,
    },
    /// Fit the model for one forecast origin and write a posterior checkpoint.
    Fit {
        /// Forecast origin (RFC 3339 or YYYY-MM-DD).
        #[arg(long)]
        init_time: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Sample a predictive ensemble for one forecast origin.
    Predict {
        /// Forecast origin (RFC 3339 or YYYY-MM-DD).
        #[arg(long)]
        init_time: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Rolling fit-predict-score over all eligible days.
    Backtest {
        /// Run all six variant x postproc combinations, sharing fits.
        #[arg(long, default_value_t = false)]
        all_variants: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Score stored ensemble CSVs against a production series.
    Verify {
        /// Directory holding ens_*.csv files.
        #[arg(long)]
        forecast_dir: PathBuf,
        /// Hourly production CSV.
        #[arg(long)]
        production: PathBuf,
        /// Report output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = load_config_file(cli.config.as_ref())?;
    match cli.command {
        Command::Synth {
            out,
            t,
            days,
            seed,
            scenario,
        } => {
            let mut sc = SynthConfig::calibrated(t, days, seed);
            sc.scenario = match scenario.as_str() {
                "well_specified" => Scenario::WellSpecified,
                "heavy_tails" => Scenario::HeavyTailedErrors { df: 3.0 },
                other => {
                    return Err(Error::config(format!(
                        "unknown scenario {other} (expected well_specified | heavy_tails)"
                    )))
                }
            };
            synth::emit_csv(&sc, &out)?;
            println!(
                "wrote {} days of synthetic data (T = {t}) to {}",
                days,
                out.display()
            );
            Ok(())
        }
        Command::Fit { init_time, common } => {
            let config = config::resolve(&file, &common)?;
            let init = parse_time(&init_time)?;
            let path = pipeline::run_fit(&config, init)?;
            println!("checkpoint written to {}", path.display());
            Ok(())
        }
        Command::Predict { init_time, common } => {
            let config = config::resolve(&file, &common)?;
            let init = parse_time(&init_time)?;
            let paths = pipeline::run_predict(&config, init)?;
            for p in paths {
                println!("ensemble written to {}", p.display());
            }
            Ok(())
        }
        Command::Backtest {
            all_variants,
            common,
        } => {
            let config = config::resolve(&file, &common)?;
            let combos: Vec<(Variant, Postproc)> = if all_variants {
                Variant::all()
                    .into_iter()
                    .flat_map(|v| [(v, Postproc::None), (v, Postproc::Copula)])
                    .collect()
            } else {
                vec![(config.variant, config.postproc)]
            };
            let outcomes = pipeline::run_backtest_multi(&config, &combos)?;
            for o in &outcomes {
                let day1 = &o.report.per_day[0];
                println!(
                    "{:>10} {:>6}: {} days scored, Day-1 MAE {:.0} RMSE {:.0} CRPS {:.0} \
                     coverage80 {:.1}% -> {}",
                    o.variant.as_str(),
                    o.postproc.as_str(),
                    o.report.n_cases,
                    day1.mae,
                    day1.rmse,
                    day1.crps,
                    100.0 * day1.coverage,
                    o.out_dir.display()
                );
            }
            Ok(())
        }
        Command::Verify {
            forecast_dir,
            production,
            out,
            seed,
        } => {
            let report = pipeline::run_verify(&forecast_dir, &production, &out, seed)?;
            let day1 = &report.per_day[0];
            println!(
                "{} cases scored; Day-1 MAE {:.0} RMSE {:.0} CRPS {:.0} -> {}",
                report.n_cases,
                day1.mae,
                day1.rmse,
                day1.crps,
                out.display()
            );
            Ok(())
        }
    }
}
