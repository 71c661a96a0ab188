//! Power-law fits of persistence curves in log-log space.
//!
//! Fits use unweighted ordinary least squares of `ln R(t)` on `ln t` over
//! integer `t >= 1`. The `R(0) = 1` anchor never enters a fit.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::model::PersistenceCurve;

/// A single straight-line fit in log-log space.
///
/// `slope` estimates `-theta` in `R(t) ~ t^(-theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub slope: f64,
    pub intercept: f64,
    pub t_lo: usize,
    pub t_hi: usize,
    pub slope_stderr: f64,
    pub sse: f64,
    pub n_points: usize,
}

impl SegmentFit {
    /// Persistence exponent `theta = -slope`.
    pub fn exponent(&self) -> f64 {
        -self.slope
    }
}

/// Two independent segments split after `breakpoint`.
///
/// Reported SSEs are the exact least-squares minima for the `f64` log
/// points, rounded down for the segments and up for the single fit, so
/// `total_sse <= single_fit_sse` holds in floating point as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePowerLawFit {
    pub short_segment: SegmentFit,
    pub long_segment: SegmentFit,
    pub breakpoint: usize,
    pub total_sse: f64,
    pub single_fit_sse: f64,
}

/// `(ln t, ln R(t))` for `t` in `[lo, hi]`, after range checks.
fn log_points(curve: &PersistenceCurve, lo: usize, hi: usize) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    let last = curve.len().saturating_sub(1);
    if lo < 1 || hi > last || lo > hi {
        return Err(FitError::OutOfSupport { lo, hi, last });
    }
    let r = curve.density();
    if let Some(t) = (lo..=hi).find(|&t| r[t].is_nan() || r[t] <= 0.0) {
        return Err(FitError::ZeroDensity { t });
    }
    let x = (lo..=hi).map(|t| (t as f64).ln()).collect();
    let y = (lo..=hi).map(|t| r[t].ln()).collect();
    Ok((x, y))
}

/// OLS of `y` on `x`; `t_lo` labels the first point.
fn ols(x: &[f64], y: &[f64], t_lo: usize) -> Result<SegmentFit, FitError> {
    let n = x.len();
    if n < 3 {
        return Err(FitError::TooFewPoints {
            lo: t_lo,
            hi: t_lo + n.saturating_sub(1),
        });
    }
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - x_mean;
        sxx += dx * dx;
        sxy += dx * (yi - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - (intercept + slope * xi);
            e * e
        })
        .sum();
    let slope_stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(SegmentFit {
        slope,
        intercept,
        t_lo,
        t_hi: t_lo + n - 1,
        slope_stderr,
        sse,
        n_points: n,
    })
}

/// Fits `ln R(t) = intercept + slope ln t` over `t` in `[t_lo, t_hi]`.
pub fn fit_power_law(curve: &PersistenceCurve, t_lo: usize, t_hi: usize) -> Result<SegmentFit, FitError> {
    if t_hi < t_lo + 2 {
        return Err(FitError::TooFewPoints { lo: t_lo, hi: t_hi });
    }
    let (x, y) = log_points(curve, t_lo, t_hi)?;
    ols(&x, &y, t_lo)
}

/// Best two-segment fit over `[t_min, t_max]`.
///
/// Every breakpoint `b` in `[t_min + 2, t_max - 3]` is tried, fitting
/// `[t_min, b]` and `[b + 1, t_max]` independently. The smallest total SSE
/// wins; ties go to the smaller `b`.
pub fn fit_double_power_law(
    curve: &PersistenceCurve,
    t_min: usize,
    t_max: usize,
) -> Result<DoublePowerLawFit, FitError> {
    let (x, y) = double_fit_points(curve, t_min, t_max)?;
    let (breakpoint, mut short, mut long) = search_breakpoint(&x, &y, t_min, t_max)?;
    let split = breakpoint - t_min + 1;
    short.sse = round_toward(&exact_sse(&x[..split], &y[..split]), Ordering::Less);
    long.sse = round_toward(&exact_sse(&x[split..], &y[split..]), Ordering::Less);
    Ok(DoublePowerLawFit {
        short_segment: short,
        long_segment: long,
        breakpoint,
        total_sse: short.sse + long.sse,
        single_fit_sse: round_toward(&exact_sse(&x, &y), Ordering::Greater),
    })
}

/// Breakpoint and segment slopes only, with `f64` SSEs; used by resampling.
pub(crate) fn fit_double_slopes(
    curve: &PersistenceCurve,
    t_min: usize,
    t_max: usize,
) -> Result<(usize, SegmentFit, SegmentFit), FitError> {
    let (x, y) = double_fit_points(curve, t_min, t_max)?;
    search_breakpoint(&x, &y, t_min, t_max)
}

fn double_fit_points(curve: &PersistenceCurve, t_min: usize, t_max: usize) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    if t_max < t_min + 5 {
        return Err(FitError::NoBreakpoint { lo: t_min, hi: t_max });
    }
    log_points(curve, t_min, t_max)
}

fn search_breakpoint(
    x: &[f64],
    y: &[f64],
    t_min: usize,
    t_max: usize,
) -> Result<(usize, SegmentFit, SegmentFit), FitError> {
    let candidates = (t_min + 2..=t_max - 3)
        .into_par_iter()
        .map(|b| {
            let split = b - t_min + 1;
            let short = ols(&x[..split], &y[..split], t_min)?;
            let long = ols(&x[split..], &y[split..], b + 1)?;
            Ok((b, short, long))
        })
        .collect::<Result<Vec<_>, FitError>>()?;

    let mut best: Option<(usize, SegmentFit, SegmentFit)> = None;
    for (b, short, long) in candidates {
        let total = short.sse + long.sse;
        if best.is_none_or(|(_, s, l)| total < s.sse + l.sse) {
            best = Some((b, short, long));
        }
    }
    best.ok_or(FitError::NoBreakpoint { lo: t_min, hi: t_max })
}

/// Minimum residual sum of squares of a line through `(x, y)`, exactly.
fn exact_sse(x: &[f64], y: &[f64]) -> BigRational {
    let q = |v: f64| BigRational::from_float(v).expect("finite log values");
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let mut sums = [BigRational::zero(), BigRational::zero(), BigRational::zero(), BigRational::zero(), BigRational::zero()];
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (q(a), q(b));
        sums[2] += &a * &a;
        sums[3] += &a * &b;
        sums[4] += &b * &b;
        sums[0] += a;
        sums[1] += b;
    }
    let [sx, sy, sxx, sxy, syy] = sums;
    let cxx = &sxx - &sx * &sx / &n;
    let cxy = &sxy - &sx * &sy / &n;
    let cyy = &syy - &sy * &sy / &n;
    cyy - &cxy * &cxy / cxx
}

/// The `f64` next to `v` on the side given by `direction` (or `v` itself when exact).
fn round_toward(v: &BigRational, direction: Ordering) -> f64 {
    let nearest = v.to_f64().unwrap_or(f64::INFINITY);
    let Some(back) = BigRational::from_float(nearest) else {
        return nearest;
    };
    match (back.cmp(v), direction) {
        (Ordering::Greater, Ordering::Less) => nearest.next_down(),
        (Ordering::Less, Ordering::Greater) => nearest.next_up(),
        _ => nearest,
    }
}

/// Default fit range for `curve`: from `t_min` to the requested `t_max`,
/// pulled back to the last strictly positive `R(t)` and the curve end.
///
/// Returns `(t_min, t_max, truncated)`.
pub fn auto_fit_range(curve: &PersistenceCurve, t_min: usize, t_max: Option<usize>) -> (usize, usize, bool) {
    let limit = curve.last_positive().unwrap_or(0);
    match t_max {
        Some(hi) if hi <= limit => (t_min, hi, false),
        Some(_) => (t_min, limit, true),
        None => (t_min, limit, limit + 1 < curve.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(s: f64, c: f64, len: usize) -> PersistenceCurve {
        let mut r = vec![1.0];
        r.extend((1..len).map(|t| c * (t as f64).powf(-s)));
        PersistenceCurve::from_densities(r)
    }

    #[test]
    fn exact_log_linear() {
        let fit = fit_power_law(&power(0.5, 1.0, 101), 1, 100).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert_eq!(fit.n_points, 100);
        assert_eq!((fit.t_lo, fit.t_hi), (1, 100));
    }

    #[test]
    fn scale_enters_intercept_only() {
        let c = 3.7;
        let a = fit_power_law(&power(1.5, 1.0, 50), 1, 49).unwrap();
        let b = fit_power_law(&power(1.5, c, 50), 1, 49).unwrap();
        assert!((b.slope + 1.5).abs() < 1e-12);
        assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_density_rejected() {
        let curve = PersistenceCurve::from_densities(vec![1.0, 0.5, 0.25, 0.1, 0.0, 0.0]);
        assert_eq!(fit_power_law(&curve, 1, 5), Err(FitError::ZeroDensity { t: 4 }));
        assert_eq!(
            fit_power_law(&curve, 1, 5).unwrap_err().to_string(),
            "zero density in fit range (R(4) = 0)"
        );
        assert!(fit_power_law(&curve, 1, 3).is_ok());
    }

    #[test]
    fn range_errors() {
        let curve = power(0.5, 1.0, 10);
        assert!(matches!(fit_power_law(&curve, 1, 2), Err(FitError::TooFewPoints { .. })));
        assert!(matches!(fit_power_law(&curve, 0, 5), Err(FitError::OutOfSupport { .. })));
        assert!(matches!(fit_power_law(&curve, 1, 10), Err(FitError::OutOfSupport { .. })));
        assert!(matches!(
            fit_double_power_law(&curve, 1, 5),
            Err(FitError::NoBreakpoint { .. })
        ));
        assert!(fit_double_power_law(&curve, 1, 6).is_ok());
    }

    #[test]
    fn double_fit_on_single_law() {
        let fit = fit_double_power_law(&power(0.5, 1.0, 60), 1, 59).unwrap();
        assert!((fit.short_segment.slope + 0.5).abs() < 1e-9);
        assert!((fit.long_segment.slope + 0.5).abs() < 1e-9);
        assert!(fit.single_fit_sse < 1e-20 && fit.total_sse < 1e-20);
        assert_eq!(fit.short_segment.t_hi, fit.breakpoint);
        assert_eq!(fit.long_segment.t_lo, fit.breakpoint + 1);
    }

    #[test]
    fn double_fit_finds_clean_kink() {
        // t^-0.2 up to t = 10, then a steeper continuation
        let mut r = vec![1.0];
        for t in 1..40usize {
            let tf = t as f64;
            r.push(if t <= 10 {
                tf.powf(-0.2)
            } else {
                10f64.powf(-0.2) * (tf / 10.0).powf(-0.8)
            });
        }
        let fit = fit_double_power_law(&PersistenceCurve::from_densities(r), 1, 39).unwrap();
        assert_eq!(fit.breakpoint, 10);
        assert!((fit.short_segment.slope + 0.2).abs() < 1e-9);
        assert!((fit.long_segment.slope + 0.8).abs() < 1e-9);
        assert!(fit.total_sse <= fit.single_fit_sse);
    }

    #[test]
    fn auto_range_truncates_at_zeros() {
        let curve = PersistenceCurve::from_densities(vec![1.0, 0.8, 0.5, 0.3, 0.0, 0.0]);
        assert_eq!(auto_fit_range(&curve, 1, None), (1, 3, true));
        assert_eq!(auto_fit_range(&curve, 1, Some(2)), (1, 2, false));
        assert_eq!(auto_fit_range(&curve, 1, Some(5)), (1, 3, true));
        let full = PersistenceCurve::from_densities(vec![1.0, 0.8, 0.5]);
        assert_eq!(auto_fit_range(&full, 1, None), (1, 2, false));
    }
}
