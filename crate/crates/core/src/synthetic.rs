//! Null-model price panels and exact reference curves.
//!
//! Each walker draws from its own ChaCha8 stream: the generator is seeded
//! from the run seed and the stream number is the walker index, so any
//! walker can be regenerated alone and the panel does not depend on how
//! walkers are scheduled across threads.

use chrono::{Datelike, NaiveDate, Weekday};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::model::{build_spin_trajectory, PersistenceCurve, PriceSeries, SampleWindow};

/// Identifier recorded in run metadata for the walker random streams.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64(seed)/stream=walker_index";

/// Default largest `t` the survival oracle will tabulate.
pub const DEFAULT_ORACLE_CAP: usize = 64;

/// Decimal places kept for continuous-model prices.
const PRICE_DP: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepModel {
    /// Price moves by exactly +1 or -1 each day with equal probability.
    PlusMinusOne,
    /// Additive Gaussian increments with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// Multiplicative walk, log-price increments Gaussian with scale `sigma`.
    Geometric { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub n_walkers: usize,
    pub n_steps: usize,
    pub step_model: StepModel,
    pub start_price: Decimal,
    pub seed: u64,
    /// Base day of the generated panel; later days follow on weekdays.
    pub start_date: NaiveDate,
}

impl WalkConfig {
    pub fn plus_minus_one(n_walkers: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_walkers,
            n_steps,
            step_model: StepModel::PlusMinusOne,
            start_price: Decimal::from(n_steps as u64 + 1),
            seed,
            start_date: default_start_date(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.n_walkers == 0 {
            return bad("n_walkers must be at least 1".into());
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.start_price <= Decimal::ZERO {
            return bad(format!("start_price must be positive, got {}", self.start_price));
        }
        match self.step_model {
            StepModel::PlusMinusOne => {
                if self.start_price <= Decimal::from(self.n_steps as u64) {
                    return bad(format!(
                        "start_price {} must exceed n_steps {} for the ±1 model",
                        self.start_price, self.n_steps
                    ));
                }
            }
            StepModel::Gaussian { sigma } | StepModel::Geometric { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return bad(format!("sigma must be positive and finite, got {sigma}"));
                }
            }
        }
        Ok(())
    }

    fn width(&self) -> usize {
        (self.n_walkers - 1).to_string().len()
    }

    /// Ticker of walker `walker`, zero-padded so tickers sort in walker order.
    pub fn ticker(&self, walker: usize) -> String {
        format!("W{walker:0width$}", width = self.width())
    }
}

pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// `count` consecutive weekdays starting at `start` (or the next weekday).
pub fn weekday_grid(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

fn walker_rng(seed: u64, walker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walker as u64);
    rng
}

/// Closing prices for one walker, base day first.
fn walker_closes(config: &WalkConfig, walker: usize) -> Result<Vec<Decimal>, SynthError> {
    let mut rng = walker_rng(config.seed, walker);
    let mut closes = Vec::with_capacity(config.n_steps + 1);
    closes.push(config.start_price);
    match config.step_model {
        StepModel::PlusMinusOne => {
            let mut price = config.start_price;
            let mut bits = 0u64;
            for step in 0..config.n_steps {
                if step % 64 == 0 {
                    bits = rng.next_u64();
                }
                if bits & 1 == 1 {
                    price += Decimal::ONE;
                } else {
                    price -= Decimal::ONE;
                }
                bits >>= 1;
                closes.push(price);
            }
        }
        StepModel::Gaussian { sigma } | StepModel::Geometric { sigma } => {
            let geometric = matches!(config.step_model, StepModel::Geometric { .. });
            let start = f64::try_from(config.start_price)
                .map_err(|_| SynthError::Config("start_price out of f64 range".into()))?;
            let mut walk = 0.0f64;
            for step in 1..=config.n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                walk += sigma * z;
                let value = if geometric {
                    start * walk.exp()
                } else {
                    start + walk
                };
                let price = Decimal::from_f64(value)
                    .map(|p| p.round_dp(PRICE_DP))
                    .filter(|p| *p > Decimal::ZERO)
                    .ok_or(SynthError::NonPositivePrice { walker, step })?;
                closes.push(price);
            }
        }
    }
    Ok(closes)
}

/// Regenerates walker `walker` of the panel described by `config`.
pub fn walker_series(config: &WalkConfig, walker: usize) -> Result<PriceSeries, SynthError> {
    let closes = walker_closes(config, walker)?;
    let dates = weekday_grid(config.start_date, closes.len());
    Ok(PriceSeries::new(config.ticker(walker), dates, closes)?)
}

/// A panel of `n_walkers` independent walks of `n_steps` days past the base day.
pub fn simulate_walk_panel(config: &WalkConfig) -> Result<SampleWindow, SynthError> {
    config.validate()?;
    let dates = weekday_grid(config.start_date, config.n_steps + 1);
    let series = (0..config.n_walkers)
        .into_par_iter()
        .map(|i| {
            let closes = walker_closes(config, i)?;
            Ok(PriceSeries::new(config.ticker(i), dates.clone(), closes)?)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(SampleWindow::new(
        format!("sim-seed{}", config.seed),
        series,
    )?)
}

/// The persistence curve of the simulated panel, one walker at a time.
///
/// Matches `simulate_walk_panel(config)?.persistence_curve()` without holding
/// the whole panel in memory.
pub fn simulate_persistence_curve(config: &WalkConfig) -> Result<PersistenceCurve, SynthError> {
    config.validate()?;
    let dates = weekday_grid(config.start_date, config.n_steps + 1);
    let flips = (0..config.n_walkers)
        .into_par_iter()
        .map(|i| {
            let closes = walker_closes(config, i)?;
            let series = PriceSeries::new(config.ticker(i), dates.clone(), closes)?;
            let tr = build_spin_trajectory(&series, series.base_price())?;
            Ok(tr.first_flip())
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(PersistenceCurve::from_first_flips(config.n_steps, flips)?)
}

/// Exact never-flipped probabilities for the symmetric ±1 walk.
///
/// The walk starts at the base price (offset 0). Day 1 sets the initial spin:
/// offset +1 gives an up spin, which survives while the offset stays `>= 0`;
/// offset -1 gives a down spin, which survives while the offset stays `<= -1`.
/// Path counts are propagated exactly and divided by `2^(t+1)`.
#[derive(Debug, Clone)]
pub struct SurvivalOracle {
    cap: usize,
    table: Vec<BigRational>,
}

impl SurvivalOracle {
    pub fn new(cap: usize) -> Self {
        Self {
            cap,
            table: survival_table(cap),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn survival(&self, t: usize) -> Result<BigRational, SynthError> {
        self.table
            .get(t)
            .cloned()
            .ok_or(SynthError::AboveCap { t, cap: self.cap })
    }

    /// Survival probabilities for `t = 0..=t_max`.
    pub fn table(&self, t_max: usize) -> Result<&[BigRational], SynthError> {
        if t_max > self.cap {
            return Err(SynthError::AboveCap { t: t_max, cap: self.cap });
        }
        Ok(&self.table[..=t_max])
    }
}

impl Default for SurvivalOracle {
    fn default() -> Self {
        Self::new(DEFAULT_ORACLE_CAP)
    }
}

/// Exact survival probability at `t` with the default cap.
pub fn exact_survival(t: usize) -> Result<BigRational, SynthError> {
    if t > DEFAULT_ORACLE_CAP {
        return Err(SynthError::AboveCap { t, cap: DEFAULT_ORACLE_CAP });
    }
    Ok(survival_table(t).swap_remove(t))
}

fn survival_table(cap: usize) -> Vec<BigRational> {
    // up[k]: surviving paths at offset k (never below base).
    // down[k]: surviving paths at offset -(k+1) (never touched base).
    let mut up = vec![BigUint::zero(); cap + 3];
    let mut down = vec![BigUint::zero(); cap + 3];
    up[1] = BigUint::one();
    down[0] = BigUint::one();

    let mut table = Vec::with_capacity(cap + 1);
    let mut denom = BigUint::from(2u8);
    for t in 0..=cap {
        if t > 0 {
            up = step_half_line(&up);
            down = step_half_line(&down);
            denom <<= 1;
        }
        let alive: BigUint = up.iter().chain(down.iter()).sum();
        table.push(BigRational::new(BigInt::from(alive), BigInt::from(denom.clone())));
    }
    table
}

/// One ±1 step on the half-line of indices `k >= 0`; stepping below 0 kills the path.
///
/// Both spin signs reduce to this walk once offsets are measured from their
/// kill boundary: up spins die at offset -1, down spins die at offset 0.
fn step_half_line(cur: &[BigUint]) -> Vec<BigUint> {
    let n = cur.len();
    let mut next = vec![BigUint::zero(); n];
    for (k, paths) in cur.iter().enumerate() {
        if paths.is_zero() {
            continue;
        }
        if k + 1 < n {
            next[k + 1] += paths;
        }
        if k >= 1 {
            next[k - 1] += paths;
        }
    }
    next
}

/// Random-walk reference shapes `R(t)` for dimension `d`:
/// `t^(d/2 - 2)` for `d < 2`, `1 / (t ln^2 t)` at `d = 2`, `t^(-d/2)` for `d > 2`.
///
/// Values are unnormalised and meant for plot overlays.
pub fn reference_curve(d: f64, ts: &[f64]) -> Result<Vec<f64>, SynthError> {
    if !(d.is_finite() && d > 0.0) {
        return Err(SynthError::Domain(format!("dimension must be positive, got {d}")));
    }
    ts.iter()
        .map(|&t| {
            if t.is_nan() || t < 1.0 {
                return Err(SynthError::Domain(format!("t must be >= 1, got {t}")));
            }
            if d < 2.0 {
                Ok(t.powf(d / 2.0 - 2.0))
            } else if d == 2.0 {
                let ln = t.ln();
                if ln == 0.0 {
                    return Err(SynthError::Domain("d = 2 needs t > 1 (ln 1 = 0)".into()));
                }
                Ok(1.0 / (t * ln * ln))
            } else {
                Ok(t.powf(-d / 2.0))
            }
        })
        .collect()
}
