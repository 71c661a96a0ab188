//! Error types, one enum per subsystem.

use chrono::NaiveDate;
use rust_decimal::Decimal;
use thiserror::Error;

/// Violations of the domain invariants in [`crate::model`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("price must be positive, got {0}")]
    NonPositivePrice(Decimal),
    #[error("series `{ticker}` has {len} point(s); need a base day plus at least one observation")]
    SeriesTooShort { ticker: String, len: usize },
    #[error("series `{ticker}` has {dates} dates but {closes} closes")]
    LengthMismatch {
        ticker: String,
        dates: usize,
        closes: usize,
    },
    #[error("series `{ticker}` dates are not strictly increasing at {date}")]
    DatesNotIncreasing { ticker: String, date: NaiveDate },
    #[error("base price {base} does not match first close {first} of `{ticker}`")]
    BaseMismatch {
        ticker: String,
        base: Decimal,
        first: Decimal,
    },
    #[error("window `{0}` contains no series")]
    EmptyWindow(String),
    #[error("series `{ticker}` in window `{window}` is not on the window's date grid")]
    GridMismatch { window: String, ticker: String },
    #[error("no trajectories to aggregate")]
    NoTrajectories,
    #[error("trajectory lengths differ: expected {expected}, found {found}")]
    MixedLengths { expected: usize, found: usize },
    #[error("no curves to average")]
    NoCurves,
}

/// Failures while reading EOD files or cutting them into windows.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate quote for ticker `{ticker}` on {date}")]
    Duplicate {
        line: u64,
        date: NaiveDate,
        ticker: String,
    },
    #[error("invalid window scheme: {0}")]
    Scheme(String),
    #[error("no analyzable windows")]
    NoAnalyzableWindows,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Invalid null-model configurations and oracle requests.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid walk configuration: {0}")]
    Config(String),
    #[error("walker {walker} reached non-positive price at step {step}")]
    NonPositivePrice { walker: usize, step: usize },
    #[error("t = {t} exceeds the oracle cap of {cap}")]
    AboveCap { t: usize, cap: usize },
    #[error("reference curve undefined: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Power-law fitting failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("zero density in fit range (R({t}) = 0)")]
    ZeroDensity { t: usize },
    #[error("fit range [{lo}, {hi}] has fewer than 3 points")]
    TooFewPoints { lo: usize, hi: usize },
    #[error("fit range [{lo}, {hi}] is outside the curve support [1, {last}]")]
    OutOfSupport { lo: usize, hi: usize, last: usize },
    #[error("no valid breakpoint in [{lo}, {hi}]; need t_max - t_min >= 5")]
    NoBreakpoint { lo: usize, hi: usize },
    #[error("bootstrap needs at least {min} resamples, got {got}")]
    TooFewResamples { min: usize, got: usize },
    #[error("every bootstrap resample was degenerate ({0} excluded)")]
    AllDegenerate(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}
