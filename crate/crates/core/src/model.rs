//! Price panels, the Ising spin mapping and the persistence curve.
//!
//! Time convention: index 0 of a [`PriceSeries`] is the base day and carries
//! no spin. Spin index `t = 0` is the first observation day, so a series of
//! `L` closes yields a trajectory of `L - 1` spins. A spin has *flipped* at the
//! first `t >= 1` where it disagrees with its value at `t = 0`; everything after
//! the first flip is ignored.

use chrono::NaiveDate;
use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// An Ising spin: `Up` when the close is at or above base, `Down` below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn value(self) -> i8 {
        match self {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Maps one end-of-day close onto a spin relative to the base price.
///
/// A close equal to the base maps to [`Spin::Up`]. Comparison is exact on
/// decimals, with no tolerance.
pub fn map_to_spin(base_price: Decimal, eod_price: Decimal) -> Result<Spin, ModelError> {
    if base_price <= Decimal::ZERO {
        return Err(ModelError::NonPositivePrice(base_price));
    }
    if eod_price <= Decimal::ZERO {
        return Err(ModelError::NonPositivePrice(eod_price));
    }
    Ok(if base_price <= eod_price {
        Spin::Up
    } else {
        Spin::Down
    })
}

/// One company's dated closing prices. Index 0 is the base day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    closes: Vec<Decimal>,
}

impl PriceSeries {
    pub fn new(
        ticker: impl Into<String>,
        dates: Vec<NaiveDate>,
        closes: Vec<Decimal>,
    ) -> Result<Self, ModelError> {
        let ticker = ticker.into();
        if dates.len() != closes.len() {
            return Err(ModelError::LengthMismatch {
                ticker,
                dates: dates.len(),
                closes: closes.len(),
            });
        }
        if closes.len() < 2 {
            return Err(ModelError::SeriesTooShort {
                ticker,
                len: closes.len(),
            });
        }
        if let Some(bad) = closes.iter().find(|c| **c <= Decimal::ZERO) {
            return Err(ModelError::NonPositivePrice(*bad));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(ModelError::DatesNotIncreasing {
                ticker,
                date: w[1],
            });
        }
        Ok(Self {
            ticker,
            dates,
            closes,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[Decimal] {
        &self.closes
    }

    pub fn base_price(&self) -> Decimal {
        self.closes[0]
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// A panel of series over one analysis window, all on the same date grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    label: String,
    series: Vec<PriceSeries>,
    base_prices: Vec<Decimal>,
}

impl SampleWindow {
    pub fn new(label: impl Into<String>, series: Vec<PriceSeries>) -> Result<Self, ModelError> {
        let label = label.into();
        let Some(first) = series.first() else {
            return Err(ModelError::EmptyWindow(label));
        };
        let grid = first.dates();
        if let Some(off) = series.iter().find(|s| s.dates() != grid) {
            return Err(ModelError::GridMismatch {
                window: label,
                ticker: off.ticker().to_owned(),
            });
        }
        let base_prices = series.iter().map(PriceSeries::base_price).collect();
        Ok(Self {
            label,
            series,
            base_prices,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn series(&self) -> &[PriceSeries] {
        &self.series
    }

    pub fn base_prices(&self) -> &[Decimal] {
        &self.base_prices
    }

    /// The shared trading-date grid, base day first.
    pub fn dates(&self) -> &[NaiveDate] {
        self.series[0].dates()
    }

    /// Number of companies, `N`.
    pub fn company_count(&self) -> usize {
        self.series.len()
    }

    /// Spin trajectories for every company, in series order.
    pub fn trajectories(&self) -> Result<Vec<SpinTrajectory>, ModelError> {
        self.series
            .par_iter()
            .zip(self.base_prices.par_iter())
            .map(|(s, base)| build_spin_trajectory(s, *base))
            .collect()
    }

    pub fn persistence_curve(&self) -> Result<PersistenceCurve, ModelError> {
        persistence_curve(&self.trajectories()?)
    }
}

/// A company's spins relative to its base price.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinTrajectory {
    ticker: String,
    spins: Vec<Spin>,
    first_flip: Option<usize>,
}

impl SpinTrajectory {
    /// Builds a trajectory from raw spins, locating the first flip.
    pub fn from_spins(ticker: impl Into<String>, spins: Vec<Spin>) -> Self {
        let first_flip = spins
            .first()
            .and_then(|&s0| spins.iter().skip(1).position(|&s| s != s0))
            .map(|p| p + 1);
        Self {
            ticker: ticker.into(),
            spins,
            first_flip,
        }
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn first_flip(&self) -> Option<usize> {
        self.first_flip
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }
}

/// Maps `series.closes[1..]` onto spins against `base_price`.
pub fn build_spin_trajectory(
    series: &PriceSeries,
    base_price: Decimal,
) -> Result<SpinTrajectory, ModelError> {
    let closes = series.closes();
    if closes.len() < 2 {
        return Err(ModelError::SeriesTooShort {
            ticker: series.ticker().to_owned(),
            len: closes.len(),
        });
    }
    if base_price != closes[0] {
        return Err(ModelError::BaseMismatch {
            ticker: series.ticker().to_owned(),
            base: base_price,
            first: closes[0],
        });
    }
    let spins = closes[1..]
        .iter()
        .map(|&p| map_to_spin(base_price, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpinTrajectory::from_spins(series.ticker(), spins))
}

/// Never-flipped counts `n(t)` and densities `R(t) = n(t) / N`.
///
/// For an average over windows, `counts` and `total` are sums across the
/// inputs while `density` is the pointwise mean of the input densities, so
/// `density[t] * total == counts[t]` holds only for single windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCurve {
    counts: Vec<u64>,
    total: u64,
    density: Vec<f64>,
    sample_count: usize,
}

impl PersistenceCurve {
    /// Builds a single-window curve of length `len` from first-flip times.
    ///
    /// A flip at `t` removes the spin from `n(u)` for every `u >= t`; flips at
    /// or beyond `len` never register. `n(0) = N` since flips happen at `t >= 1`.
    pub fn from_first_flips<I>(len: usize, first_flips: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = Option<usize>>,
    {
        let mut flips_at = vec![0u64; len];
        let mut total = 0u64;
        for flip in first_flips {
            total += 1;
            if let Some(t) = flip.filter(|&t| t < len) {
                flips_at[t] += 1;
            }
        }
        if total == 0 {
            return Err(ModelError::NoTrajectories);
        }
        let mut alive = total;
        let counts: Vec<u64> = flips_at
            .iter()
            .map(|&f| {
                alive -= f;
                alive
            })
            .collect();
        let density = counts.iter().map(|&n| n as f64 / total as f64).collect();
        Ok(Self {
            counts,
            total,
            density,
            sample_count: 1,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total spin count `N` (summed over windows for averages).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    /// Largest `t` with `R(t) > 0`.
    pub fn last_positive(&self) -> Option<usize> {
        self.density.iter().rposition(|&r| r > 0.0)
    }

    /// The same curve with every density multiplied by `factor`.
    ///
    /// Used to probe scale invariance of the fitters; counts are untouched.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            density: self.density.iter().map(|r| r * factor).collect(),
            ..self.clone()
        }
    }

    /// A curve made directly from densities, for fitting synthetic shapes.
    pub fn from_densities(density: Vec<f64>) -> Self {
        Self {
            counts: Vec::new(),
            total: 0,
            density,
            sample_count: 1,
        }
    }
}

/// Counts spins that have not flipped up to each `t`.
pub fn persistence_curve(trajectories: &[SpinTrajectory]) -> Result<PersistenceCurve, ModelError> {
    let first = trajectories.first().ok_or(ModelError::NoTrajectories)?;
    let len = first.len();
    if let Some(odd) = trajectories.iter().find(|tr| tr.len() != len) {
        return Err(ModelError::MixedLengths {
            expected: len,
            found: odd.len(),
        });
    }
    PersistenceCurve::from_first_flips(len, trajectories.iter().map(SpinTrajectory::first_flip))
}

/// Pointwise mean of `R(t)`, truncated to the shortest input.
pub fn average_curves(curves: &[PersistenceCurve]) -> Result<PersistenceCurve, ModelError> {
    let len = curves
        .iter()
        .map(PersistenceCurve::len)
        .min()
        .ok_or(ModelError::NoCurves)?;
    let k = curves.len() as f64;
    let density = (0..len)
        .map(|t| curves.iter().map(|c| c.density[t]).sum::<f64>() / k)
        .collect();
    let counts = (0..len)
        .map(|t| {
            curves
                .iter()
                .map(|c| c.counts.get(t).copied().unwrap_or(0))
                .sum()
        })
        .collect();
    Ok(PersistenceCurve {
        counts,
        total: curves.iter().map(|c| c.total).sum(),
        density,
        sample_count: curves.len(),
    })
}
