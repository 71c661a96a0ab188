//! End-to-end commands: analyze a price file, simulate a null panel, tabulate
//! the survival oracle.
//!
//! `analyze` writes three files into its output directory:
//!
//! - `report.json`: the full [`AnalysisReport`]
//! - `curve.csv`: `t,n,R` followed by one `R_<label>` column per window
//! - `plot.dat`: whitespace-separated `ln t`, `ln R` and a `t^-3/2` reference
//!   column, for `t >= 1` where `R > 0`

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use num_traits::ToPrimitive;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bootstrap::{self, bootstrap_slopes, BootstrapSummary};
use crate::error::{FitError, IngestError, ModelError, SynthError};
use crate::fitting::{auto_fit_range, fit_double_power_law, fit_power_law, DoublePowerLawFit, SegmentFit};
use crate::ingest::{parse_eod_csv, partition_windows, write_window_csv, PartitionConfig, PartitionNote, WindowScheme};
use crate::model::{average_curves, PersistenceCurve, SampleWindow};
use crate::synthetic::{self, reference_curve, simulate_walk_panel, SurvivalOracle, WalkConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Dimension of the random-walk reference shape drawn in `plot.dat`.
const REFERENCE_DIMENSION: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {}: {source}", path.display())]
    ReadInput {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    WriteOutput {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
}

impl ReportError {
    /// Process exit code: 2 input/usage, 3 no analyzable data, 4 fit degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Ingest(IngestError::NoAnalyzableWindows) => 3,
            ReportError::Fit(_) => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub scheme: WindowScheme,
    pub fit_t_min: usize,
    pub fit_t_max: Option<usize>,
    /// Zero skips the bootstrap.
    pub n_resamples: usize,
    pub seed: u64,
    pub coverage_threshold: f64,
    /// Worker threads; `None` uses rayon's default. Never affects output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl AnalyzeConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            output_dir: output_dir.into(),
            scheme: WindowScheme::Quarterly,
            fit_t_min: 1,
            fit_t_max: None,
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
            coverage_threshold: crate::ingest::DEFAULT_COVERAGE_THRESHOLD,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveReport {
    /// Never-flipped counts, as decimal strings.
    pub n: Vec<String>,
    pub total: String,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub sample_count: usize,
}

impl From<&PersistenceCurve> for CurveReport {
    fn from(c: &PersistenceCurve) -> Self {
        Self {
            n: c.counts().iter().map(u64::to_string).collect(),
            total: c.total().to_string(),
            r: c.density().to_vec(),
            sample_count: c.sample_count(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowReport {
    pub label: String,
    /// `N` for this window.
    pub companies: usize,
    pub trading_days: usize,
    pub first_date: String,
    pub last_date: String,
    pub curve: CurveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub t_min: usize,
    pub t_max: usize,
    pub requested_t_max: Option<usize>,
    /// `t_max` was pulled back to the last positive `R(t)`.
    pub truncated: bool,
    pub double: Option<DoublePowerLawFit>,
    pub single: Option<SegmentFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub scheme: String,
    pub fit_t_min: usize,
    pub fit_t_max: Option<usize>,
    pub n_resamples: usize,
    pub seed: u64,
    pub coverage_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub tool_version: String,
    pub input_path: String,
    pub input_sha256: String,
    pub input_bytes: usize,
    pub config: RunConfig,
    pub rng_algorithm: String,
    /// The only field that varies between identical runs.
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub windows: Vec<WindowReport>,
    pub averaged: CurveReport,
    pub fit: FitReport,
    pub bootstrap: Option<BootstrapSummary>,
    pub partition_notes: Vec<PartitionNote>,
    pub metadata: RunMetadata,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
fn timestamp() -> String {
    let when = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    when.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, ReportError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(ReportError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ReportError::Usage(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError::WriteOutput {
        path: path.to_owned(),
        source,
    })
}

/// Runs the whole pipeline and writes `report.json`, `curve.csv` and `plot.dat`.
///
/// Curve files are written even when fitting fails; the report then records
/// the fit error and the call returns [`ReportError::Fit`].
pub fn cmd_analyze(config: &AnalyzeConfig) -> Result<AnalysisReport, ReportError> {
    if config.n_resamples != 0 && config.n_resamples < bootstrap::MIN_RESAMPLES {
        return Err(ReportError::Usage(format!(
            "--resamples must be 0 or at least {}",
            bootstrap::MIN_RESAMPLES
        )));
    }
    if config.fit_t_min < 1 {
        return Err(ReportError::Usage("fit range must start at t >= 1".into()));
    }
    if !(config.coverage_threshold > 0.0 && config.coverage_threshold <= 1.0) {
        return Err(ReportError::Usage("coverage threshold must be in (0, 1]".into()));
    }
    let bytes = fs::read(&config.input).map_err(|source| ReportError::ReadInput {
        path: config.input.clone(),
        source,
    })?;
    with_threads(config.threads, || analyze_bytes(config, &bytes))?
}

fn analyze_bytes(config: &AnalyzeConfig, bytes: &[u8]) -> Result<AnalysisReport, ReportError> {
    let dataset = parse_eod_csv(bytes)?;
    let partition = partition_windows(
        &dataset,
        &config.scheme,
        &PartitionConfig {
            coverage_threshold: config.coverage_threshold,
        },
    )?;
    let windows = &partition.windows;
    let curves = windows
        .iter()
        .map(SampleWindow::persistence_curve)
        .collect::<Result<Vec<_>, _>>()?;
    let averaged = average_curves(&curves)?;

    fs::create_dir_all(&config.output_dir).map_err(|source| ReportError::WriteOutput {
        path: config.output_dir.clone(),
        source,
    })?;
    write_file(
        &config.output_dir.join("curve.csv"),
        curve_csv(&averaged, windows, &curves).as_bytes(),
    )?;
    write_file(
        &config.output_dir.join("plot.dat"),
        plot_dat(&averaged, config.fit_t_min).as_bytes(),
    )?;

    let (t_min, t_max, truncated) = auto_fit_range(&averaged, config.fit_t_min, config.fit_t_max);
    if truncated {
        log::warn!("fit range truncated to t_max = {t_max} (last positive R)");
    }
    let fitted = fit_double_power_law(&averaged, t_min, t_max)
        .and_then(|d| Ok((d, fit_power_law(&averaged, t_min, t_max)?)));
    let bootstrap = match (&fitted, config.n_resamples) {
        (Ok(_), n) if n > 0 => Some(bootstrap_slopes(windows, t_min, t_max, n, config.seed)),
        _ => None,
    };
    let failure = match (&fitted, &bootstrap) {
        (Err(e), _) | (_, Some(Err(e))) => Some(e.clone()),
        _ => None,
    };

    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        windows: windows
            .iter()
            .zip(&curves)
            .map(|(w, c)| WindowReport {
                label: w.label().to_owned(),
                companies: w.company_count(),
                trading_days: w.dates().len(),
                first_date: w.dates()[0].to_string(),
                last_date: w.dates()[w.dates().len() - 1].to_string(),
                curve: c.into(),
            })
            .collect(),
        averaged: (&averaged).into(),
        fit: FitReport {
            t_min,
            t_max,
            requested_t_max: config.fit_t_max,
            truncated,
            double: fitted.as_ref().ok().map(|f| f.0),
            single: fitted.as_ref().ok().map(|f| f.1),
            error: failure.as_ref().map(ToString::to_string),
        },
        bootstrap: bootstrap.and_then(Result::ok),
        partition_notes: partition.notes.clone(),
        metadata: RunMetadata {
            tool: "persist".into(),
            tool_version: TOOL_VERSION.into(),
            input_path: config.input.display().to_string(),
            input_sha256: hex::encode(Sha256::digest(bytes)),
            input_bytes: bytes.len(),
            config: RunConfig {
                scheme: config.scheme.to_string(),
                fit_t_min: config.fit_t_min,
                fit_t_max: config.fit_t_max,
                n_resamples: config.n_resamples,
                seed: config.seed,
                coverage_threshold: config.coverage_threshold,
            },
            rng_algorithm: bootstrap::RNG_ALGORITHM.into(),
            timestamp: timestamp(),
        },
    };
    write_file(&config.output_dir.join("report.json"), report.to_json().as_bytes())?;
    match failure {
        Some(e) => Err(ReportError::Fit(e)),
        None => Ok(report),
    }
}

/// `t,n,R,R_<label>...` rows over the averaged curve's support.
pub fn curve_csv(averaged: &PersistenceCurve, windows: &[SampleWindow], curves: &[PersistenceCurve]) -> String {
    let mut out = String::from("t,n,R");
    for w in windows {
        write!(out, ",R_{}", w.label()).unwrap();
    }
    out.push('\n');
    for t in 0..averaged.len() {
        write!(out, "{t},{},{}", averaged.counts()[t], averaged.density()[t]).unwrap();
        for c in curves {
            write!(out, ",{}", c.density()[t]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Natural-log plot columns with a `d = 1` random-walk reference.
///
/// The reference passes through the data at `t_ref`, or at the first
/// plotted point when `R(t_ref) = 0`.
pub fn plot_dat(curve: &PersistenceCurve, t_ref: usize) -> String {
    let r = curve.density();
    let points: Vec<usize> = (1..curve.len()).filter(|&t| r[t] > 0.0).collect();
    let anchor = if t_ref < curve.len() && r[t_ref] > 0.0 {
        Some(t_ref)
    } else {
        points.first().copied()
    };

    let mut out = String::new();
    out.push_str("# persistence curve, natural logarithms\n");
    if let Some(a) = anchor {
        writeln!(
            out,
            "# reference: random-walk shape for d = 1 (slope -1.5), matched to R at t = {a}"
        )
        .unwrap();
    }
    out.push_str("# ln_t ln_R ln_ref_d1\n");
    let Some(anchor) = anchor else {
        return out;
    };
    let ts: Vec<f64> = points.iter().map(|&t| t as f64).collect();
    let shape = reference_curve(REFERENCE_DIMENSION, &ts).expect("t >= 1 with d = 1");
    let anchor_shape = reference_curve(REFERENCE_DIMENSION, &[anchor as f64]).expect("t >= 1")[0];
    let offset = r[anchor].ln() - anchor_shape.ln();
    for (i, &t) in points.iter().enumerate() {
        writeln!(
            out,
            "{} {} {}",
            (t as f64).ln(),
            r[t].ln(),
            shape[i].ln() + offset
        )
        .unwrap();
    }
    out
}

/// Writes a simulated panel in the ingestion CSV schema, to `output` or stdout.
pub fn cmd_simulate(config: &WalkConfig, output: Option<&Path>, threads: Option<usize>) -> Result<(), ReportError> {
    let panel = with_threads(threads, || simulate_walk_panel(config))??;
    let mut buf = Vec::new();
    write_window_csv(&mut buf, &panel).expect("writing to memory");
    match output {
        Some(path) => write_file(path, &buf),
        None => std::io::stdout()
            .lock()
            .write_all(&buf)
            .map_err(|source| ReportError::WriteOutput {
                path: "<stdout>".into(),
                source,
            }),
    }
}

/// `t,exact,decimal` rows of the exact ±1-walk survival probability.
pub fn cmd_oracle(t_max: usize, cap: usize) -> Result<String, ReportError> {
    if t_max > cap {
        return Err(SynthError::AboveCap { t: t_max, cap }.into());
    }
    let oracle = SurvivalOracle::new(cap);
    let mut out = String::from("t,exact,decimal\n");
    for (t, p) in oracle.table(t_max)?.iter().enumerate() {
        let dec = p.to_f64().unwrap_or(f64::NAN);
        writeln!(out, "{t},{p},{dec:?}").unwrap();
    }
    Ok(out)
}

pub use synthetic::DEFAULT_ORACLE_CAP;
