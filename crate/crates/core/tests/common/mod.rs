//! Test-only oracles. Nothing here calls into the code paths under test.

#![allow(dead_code)]

use chrono::NaiveDate;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rust_decimal::Decimal;

/// Never-flipped counts by direct prefix scan of raw prices.
///
/// `panel[i]` is company `i`'s closes with the base price first. For each
/// `t`, a company counts when every close in `closes[1..=t+1]` sits on the
/// same side of base as `closes[1]`, with a close equal to base counted as
/// at-or-above.
pub fn brute_force_counts(panel: &[Vec<Decimal>]) -> Vec<u64> {
    let len = panel[0].len() - 1;
    (0..len)
        .map(|t| {
            panel
                .iter()
                .filter(|closes| {
                    let base = closes[0];
                    let above0 = closes[1] >= base;
                    closes[1..=t + 1].iter().all(|&p| (p >= base) == above0)
                })
                .count() as u64
        })
        .collect()
}

/// Survival probability of the ±1 walk by enumerating all `2^(t+1)` paths.
pub fn enumerate_survival(t: usize) -> BigRational {
    let steps = t + 1;
    let mut alive = 0u64;
    for path in 0u64..(1 << steps) {
        let mut x = 0i64;
        let mut first = None;
        let mut survived = true;
        for k in 0..steps {
            x += if path >> k & 1 == 1 { 1 } else { -1 };
            let up = x >= 0;
            match first {
                None => first = Some(up),
                Some(f) if f != up => {
                    survived = false;
                    break;
                }
                _ => {}
            }
        }
        if survived {
            alive += 1;
        }
    }
    BigRational::new(BigInt::from(alive), BigInt::from(1u64 << steps))
}

/// Slope and intercept from the 2x2 normal equations, solved exactly in
/// rational arithmetic on the given `f64` inputs.
pub fn normal_equations(x: &[f64], y: &[f64]) -> (f64, f64) {
    let q = |v: f64| BigRational::from_float(v).expect("finite input");
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let (mut sx, mut sy, mut sxx, mut sxy) = (q(0.0), q(0.0), q(0.0), q(0.0));
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (q(a), q(b));
        sx += &a;
        sy += &b;
        sxx += &a * &a;
        sxy += &a * &b;
    }
    let det = &n * &sxx - &sx * &sx;
    let slope = (&n * &sxy - &sx * &sy) / &det;
    let intercept = (&sxx * &sy - &sx * &sxy) / &det;
    (slope.to_f64().unwrap(), intercept.to_f64().unwrap())
}

pub fn day(offset: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2002, 1, 4).unwrap() + chrono::Days::new(offset)
}

pub fn grid(n: usize) -> Vec<NaiveDate> {
    (0..n as u64).map(day).collect()
}
