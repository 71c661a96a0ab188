//! `persist`: persistence analysis of end-of-day share prices.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use persistence_core::ingest::WindowScheme;
use persistence_core::report::{
    cmd_analyze, cmd_oracle, cmd_simulate, AnalyzeConfig, ReportError, DEFAULT_ORACLE_CAP, DEFAULT_RESAMPLES,
};
use persistence_core::synthetic::{default_start_date, StepModel, WalkConfig};
use rust_decimal::Decimal;

#[derive(Parser)]
#[command(name = "persist", version, about = "Global persistence of share prices relative to a base day")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze an EOD price CSV (`date,ticker,close`, optionally gzipped).
    ///
    /// Writes report.json, curve.csv and plot.dat into the output directory.
    Analyze {
        input: PathBuf,
        /// `quarterly`, `full`, or comma-separated `YYYY-MM-DD..YYYY-MM-DD` ranges.
        #[arg(long, default_value = "quarterly", value_parser = parse_scheme)]
        scheme: WindowScheme,
        /// Fit range `LO:HI`; `LO:` fits up to the last positive R(t).
        #[arg(long, default_value = "1:", value_parser = parse_fit_range)]
        fit_range: (usize, Option<usize>),
        /// Bootstrap resamples; 0 skips the bootstrap.
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minimum fraction of a window's dates a ticker must be quoted on.
        #[arg(long, default_value_t = persistence_core::ingest::DEFAULT_COVERAGE_THRESHOLD)]
        coverage: f64,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        /// Worker threads (results do not depend on this).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Simulate a panel of independent walkers in the analyze input schema.
    Simulate {
        #[arg(long, value_enum, default_value_t = Model::Pm1)]
        model: Model,
        #[arg(long)]
        walkers: usize,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to steps + 1 for pm1 and 100 otherwise.
        #[arg(long)]
        start_price: Option<Decimal>,
        /// Step scale; defaults to 1 for gauss and 0.01 for geom.
        #[arg(long)]
        sigma: Option<f64>,
        /// First (base) date of the weekday grid.
        #[arg(long, default_value_t = default_start_date())]
        start_date: NaiveDate,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print exact survival probabilities of the ±1 walk for t = 0..=t_max.
    Oracle {
        #[arg(long)]
        t_max: usize,
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    /// Symmetric ±1 steps.
    Pm1,
    /// Additive Gaussian steps.
    Gauss,
    /// Gaussian log-returns.
    Geom,
}

fn parse_scheme(s: &str) -> Result<WindowScheme, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_fit_range(s: &str) -> Result<(usize, Option<usize>), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI or LO:")?;
    let lo = lo.trim().parse().map_err(|e| format!("bad LO `{lo}`: {e}"))?;
    let hi = match hi.trim() {
        "" => None,
        h => Some(h.parse().map_err(|e| format!("bad HI `{h}`: {e}"))?),
    };
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<(), ReportError> {
    match cli.command {
        Command::Analyze {
            input,
            scheme,
            fit_range,
            resamples,
            seed,
            coverage,
            out,
            threads,
        } => {
            let config = AnalyzeConfig {
                scheme,
                fit_t_min: fit_range.0,
                fit_t_max: fit_range.1,
                n_resamples: resamples,
                seed,
                coverage_threshold: coverage,
                threads,
                ..AnalyzeConfig::new(input, &out)
            };
            let report = cmd_analyze(&config)?;
            for w in &report.windows {
                println!("{}: N = {}, {} trading days", w.label, w.companies, w.trading_days);
            }
            if let Some(fit) = &report.fit.double {
                println!(
                    "slopes {:.4} (t {}..{}) and {:.4} (t {}..{}), breakpoint {}",
                    fit.short_segment.slope,
                    fit.short_segment.t_lo,
                    fit.short_segment.t_hi,
                    fit.long_segment.slope,
                    fit.long_segment.t_lo,
                    fit.long_segment.t_hi,
                    fit.breakpoint
                );
            }
            if let Some(b) = &report.bootstrap {
                println!(
                    "bootstrap {:.0}% CI: short [{:.4}, {:.4}], long [{:.4}, {:.4}] ({} valid of {})",
                    b.confidence_level * 100.0,
                    b.short_slope.ci_low,
                    b.short_slope.ci_high,
                    b.long_slope.ci_low,
                    b.long_slope.ci_high,
                    b.n_valid,
                    b.n_resamples
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Simulate {
            model,
            walkers,
            steps,
            seed,
            start_price,
            sigma,
            start_date,
            output,
            threads,
        } => {
            let step_model = match model {
                Model::Pm1 => StepModel::PlusMinusOne,
                Model::Gauss => StepModel::Gaussian {
                    sigma: sigma.unwrap_or(1.0),
                },
                Model::Geom => StepModel::Geometric {
                    sigma: sigma.unwrap_or(0.01),
                },
            };
            let base = WalkConfig::plus_minus_one(walkers, steps, seed);
            let default_start = match model {
                Model::Pm1 => base.start_price,
                _ => Decimal::from(100),
            };
            let config = WalkConfig {
                step_model,
                start_price: start_price.unwrap_or(default_start),
                start_date,
                ..base
            };
            cmd_simulate(&config, output.as_deref(), threads)
        }
        Command::Oracle { t_max, cap } => {
            print!("{}", cmd_oracle(t_max, cap)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
