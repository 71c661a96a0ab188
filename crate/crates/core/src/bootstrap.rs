//! Company-resampling bootstrap for the double power-law slopes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, ModelError};
use crate::fitting::fit_double_slopes;
use crate::model::{average_curves, PersistenceCurve, SampleWindow};

pub const MIN_RESAMPLES: usize = 100;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// Identifier recorded in run metadata for the resampling streams.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64(seed)/stream=resample_index";

/// First-flip times of one window, all that resampling needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipSample {
    pub len: usize,
    pub first_flips: Vec<Option<usize>>,
}

impl FlipSample {
    pub fn from_window(window: &SampleWindow) -> Result<Self, ModelError> {
        let trajectories = window.trajectories()?;
        Ok(Self {
            len: window.dates().len() - 1,
            first_flips: trajectories.iter().map(|t| t.first_flip()).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStat {
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub short_slope: BootstrapStat,
    pub long_slope: BootstrapStat,
    pub breakpoint: BootstrapStat,
    pub n_resamples: usize,
    pub n_valid: usize,
    pub n_degenerate: usize,
    pub confidence_level: f64,
    pub seed: u64,
}

/// Resamples companies with replacement inside each window, re-averages and
/// refits. Resamples whose fit range hits a zero density are counted as
/// degenerate and left out of the summary.
pub fn bootstrap_slopes(
    windows: &[SampleWindow],
    t_min: usize,
    t_max: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapSummary, FitError> {
    let samples = windows
        .iter()
        .map(FlipSample::from_window)
        .collect::<Result<Vec<_>, _>>()?;
    bootstrap_flip_samples(&samples, t_min, t_max, n_resamples, seed)
}

pub fn bootstrap_flip_samples(
    samples: &[FlipSample],
    t_min: usize,
    t_max: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapSummary, FitError> {
    if n_resamples < MIN_RESAMPLES {
        return Err(FitError::TooFewResamples {
            min: MIN_RESAMPLES,
            got: n_resamples,
        });
    }
    let common = samples
        .iter()
        .map(|s| s.len)
        .min()
        .ok_or(ModelError::NoCurves)?;
    let last = common.saturating_sub(1);
    if t_min < 1 || t_max > last {
        return Err(FitError::OutOfSupport { lo: t_min, hi: t_max, last });
    }
    if t_max < t_min + 5 {
        return Err(FitError::NoBreakpoint { lo: t_min, hi: t_max });
    }

    let fits = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let curves = samples
                .iter()
                .map(|s| {
                    let n = s.first_flips.len();
                    let picks = (0..n).map(|_| s.first_flips[rng.random_range(0..n)]);
                    PersistenceCurve::from_first_flips(s.len, picks)
                })
                .collect::<Result<Vec<_>, _>>()?;
            match fit_double_slopes(&average_curves(&curves)?, t_min, t_max) {
                Ok((b, short, long)) => Ok(Some([short.slope, long.slope, b as f64])),
                Err(FitError::ZeroDensity { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<Option<[f64; 3]>>, FitError>>()?;

    let valid: Vec<[f64; 3]> = fits.iter().flatten().copied().collect();
    let n_degenerate = n_resamples - valid.len();
    if valid.is_empty() {
        return Err(FitError::AllDegenerate(n_degenerate));
    }
    let column = |i: usize| summarize(valid.iter().map(|v| v[i]).collect());
    Ok(BootstrapSummary {
        short_slope: column(0),
        long_slope: column(1),
        breakpoint: column(2),
        n_resamples,
        n_valid: valid.len(),
        n_degenerate,
        confidence_level: CONFIDENCE_LEVEL,
        seed,
    })
}

fn summarize(mut values: Vec<f64>) -> BootstrapStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - CONFIDENCE_LEVEL;
    BootstrapStat {
        mean,
        stderr: var.sqrt(),
        ci_low: quantile(&values, alpha / 2.0),
        ci_high: quantile(&values, 1.0 - alpha / 2.0),
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
