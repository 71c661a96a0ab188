//! EOD price files and their partition into analysis windows.
//!
//! Input schema is a CSV with header `date,ticker,close`, ISO dates and
//! positive decimal closes. Gzip input is recognised by its magic bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use flate2::read::MultiGzDecoder;
use log::warn;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::model::{PriceSeries, SampleWindow};

pub const CSV_HEADER: [&str; 3] = ["date", "ticker", "close"];
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.95;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQuote {
    pub date: NaiveDate,
    pub ticker: String,
    pub close: Decimal,
}

/// Quotes grouped by ticker, plus the union of all trading dates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelDataset {
    quotes: BTreeMap<String, BTreeMap<NaiveDate, Decimal>>,
    dates: BTreeSet<NaiveDate>,
}

impl PanelDataset {
    /// Inserts one quote; `false` if `(date, ticker)` was already present.
    pub fn insert(&mut self, quote: RawQuote) -> bool {
        let by_date = self.quotes.entry(quote.ticker).or_default();
        if by_date.contains_key(&quote.date) {
            return false;
        }
        by_date.insert(quote.date, quote.close);
        self.dates.insert(quote.date);
        true
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.quotes.keys().map(String::as_str)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.dates.iter().copied()
    }

    pub fn quotes_for(&self, ticker: &str) -> Option<&BTreeMap<NaiveDate, Decimal>> {
        self.quotes.get(ticker)
    }

    pub fn quote_count(&self) -> usize {
        self.quotes.values().map(BTreeMap::len).sum()
    }

    /// Number of quotes each ticker has inside `range`.
    pub fn coverage(&self, range: &DateRange) -> BTreeMap<&str, usize> {
        self.quotes
            .iter()
            .map(|(t, q)| (t.as_str(), q.range(range.start..=range.end).count()))
            .collect()
    }

    /// All quotes in `(date, ticker)` order.
    pub fn iter_quotes(&self) -> Vec<RawQuote> {
        let mut out: Vec<RawQuote> = self
            .quotes
            .iter()
            .flat_map(|(t, q)| {
                q.iter().map(move |(d, c)| RawQuote {
                    date: *d,
                    ticker: t.clone(),
                    close: *c,
                })
            })
            .collect();
        out.sort_by(|a, b| (a.date, &a.ticker).cmp(&(b.date, &b.ticker)));
        out
    }
}

/// Parses an EOD CSV (optionally gzip-compressed).
pub fn parse_eod_csv<R: Read>(mut input: R) -> Result<PanelDataset, IngestError> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    let bytes = if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        out
    } else {
        raw
    };
    let text = std::str::from_utf8(&bytes).map_err(|_| IngestError::NotUtf8)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| csv_error(e, 1))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(IngestError::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut dataset = PanelDataset::default();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let quote = parse_record(&record, line)?;
        let (date, ticker) = (quote.date, quote.ticker.clone());
        if !dataset.insert(quote) {
            return Err(IngestError::Duplicate { line, date, ticker });
        }
    }
    Ok(dataset)
}

fn csv_error(err: csv::Error, fallback_line: u64) -> IngestError {
    let line = err.position().map_or(fallback_line, |p| p.line());
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => {
            format!("expected 3 fields, found {len}")
        }
        _ => err.to_string(),
    };
    IngestError::Parse { line, message }
}

fn parse_record(record: &csv::StringRecord, line: u64) -> Result<RawQuote, IngestError> {
    let parse_err = |message: String| IngestError::Parse { line, message };
    let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
        .map_err(|e| parse_err(format!("bad date `{}`: {e}", &record[0])))?;
    let ticker = record[1].to_owned();
    if ticker.is_empty() {
        return Err(parse_err("empty ticker".into()));
    }
    let close = Decimal::from_str(&record[2])
        .map_err(|_| parse_err(format!("close `{}` is not a decimal number", &record[2])))?;
    if close <= Decimal::ZERO {
        return Err(parse_err(format!("close must be positive, got {close}")));
    }
    Ok(RawQuote {
        date,
        ticker,
        close,
    })
}

/// Writes quotes in the schema [`parse_eod_csv`] reads, sorted by date then ticker.
pub fn write_eod_csv<W: Write>(out: W, quotes: &[RawQuote]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "{}", CSV_HEADER.join(","))?;
    let mut order: Vec<&RawQuote> = quotes.iter().collect();
    order.sort_by(|a, b| (a.date, &a.ticker).cmp(&(b.date, &b.ticker)));
    for q in order {
        writeln!(w, "{},{},{}", q.date.format("%Y-%m-%d"), q.ticker, q.close)?;
    }
    w.flush()
}

/// Writes every quote of `window` in the input schema, sorted by date then ticker.
pub fn write_window_csv<W: Write>(out: W, window: &SampleWindow) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "{}", CSV_HEADER.join(","))?;
    let mut order: Vec<&PriceSeries> = window.series().iter().collect();
    order.sort_by(|a, b| a.ticker().cmp(b.ticker()));
    for (i, date) in window.dates().iter().enumerate() {
        let date = date.format("%Y-%m-%d").to_string();
        for s in &order {
            writeln!(w, "{date},{},{}", s.ticker(), s.closes()[i])?;
        }
    }
    w.flush()
}

/// Flattens a window back into quotes.
pub fn window_quotes(window: &SampleWindow) -> Vec<RawQuote> {
    window
        .series()
        .iter()
        .flat_map(|s| {
            s.dates().iter().zip(s.closes()).map(|(d, c)| RawQuote {
                date: *d,
                ticker: s.ticker().to_owned(),
                close: *c,
            })
        })
        .collect()
}

/// An inclusive calendar range with a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// How the dataset is cut into windows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowScheme {
    /// Calendar quarters (Jan-Mar, Apr-Jun, Jul-Sep, Oct-Dec) of every year present.
    #[default]
    Quarterly,
    /// One window spanning the whole dataset.
    Full,
    Explicit(Vec<DateRange>),
}

impl fmt::Display for WindowScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowScheme::Quarterly => f.write_str("quarterly"),
            WindowScheme::Full => f.write_str("full"),
            WindowScheme::Explicit(ranges) => {
                let parts: Vec<String> = ranges
                    .iter()
                    .map(|r| format!("{}..{}", r.start, r.end))
                    .collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for WindowScheme {
    type Err = IngestError;

    /// `quarterly`, `full`, or comma-separated `YYYY-MM-DD..YYYY-MM-DD` ranges.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "quarterly" => return Ok(WindowScheme::Quarterly),
            "full" => return Ok(WindowScheme::Full),
            _ => {}
        }
        let bad = |m: String| IngestError::Scheme(m);
        let ranges = s
            .split(',')
            .map(|part| {
                let part = part.trim();
                let (a, b) = part
                    .split_once("..")
                    .ok_or_else(|| bad(format!("`{part}` is not START..END")))?;
                let parse = |x: &str| {
                    NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d")
                        .map_err(|e| bad(format!("bad date `{x}`: {e}")))
                };
                let (start, end) = (parse(a)?, parse(b)?);
                if start > end {
                    return Err(bad(format!("range `{part}` ends before it starts")));
                }
                Ok(DateRange {
                    label: format!("{start}..{end}"),
                    start,
                    end,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(WindowScheme::Explicit(ranges))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Minimum fraction of a window's candidate dates a ticker must be quoted on.
    pub coverage_threshold: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
        }
    }
}

/// Where input quotes went that did not end up in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionNote {
    TickerDropped {
        window: String,
        ticker: String,
        quoted: usize,
        candidates: usize,
    },
    OffGrid {
        window: String,
        ticker: String,
        quotes: usize,
    },
    WindowSkipped {
        window: String,
        grid_dates: usize,
        quotes: usize,
    },
    OutsideWindows {
        quotes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub windows: Vec<SampleWindow>,
    pub notes: Vec<PartitionNote>,
}

/// Calendar ranges for `scheme` over the dates present in `dataset`.
pub fn window_ranges(dataset: &PanelDataset, scheme: &WindowScheme) -> Vec<DateRange> {
    let (Some(first), Some(last)) = (dataset.dates.first(), dataset.dates.last()) else {
        return Vec::new();
    };
    match scheme {
        WindowScheme::Explicit(r) => r.clone(),
        WindowScheme::Full => vec![DateRange {
            label: "full".into(),
            start: *first,
            end: *last,
        }],
        WindowScheme::Quarterly => {
            let mut out: Vec<DateRange> = Vec::new();
            for d in &dataset.dates {
                let q = d.month0() / 3;
                let label = format!("{}-Q{}", d.year(), q + 1);
                if out.last().is_some_and(|r| r.label == label) {
                    continue;
                }
                let start = NaiveDate::from_ymd_opt(d.year(), q * 3 + 1, 1).expect("valid quarter");
                let end = if q == 3 {
                    NaiveDate::from_ymd_opt(d.year(), 12, 31)
                } else {
                    NaiveDate::from_ymd_opt(d.year(), q * 3 + 4, 1).and_then(|n| n.pred_opt())
                }
                .expect("valid quarter end");
                out.push(DateRange { label, start, end });
            }
            out
        }
    }
}

/// Cuts the dataset into aligned [`SampleWindow`]s.
///
/// Per window: tickers quoted on fewer than `coverage_threshold` of the
/// candidate dates are dropped, the grid is the intersection of the remaining
/// tickers' dates, and the base price is each ticker's first grid close.
pub fn partition_windows(
    dataset: &PanelDataset,
    scheme: &WindowScheme,
    config: &PartitionConfig,
) -> Result<Partition, IngestError> {
    let ranges = window_ranges(dataset, scheme);
    let mut windows = Vec::new();
    let mut notes = Vec::new();

    for range in &ranges {
        let candidates: Vec<NaiveDate> = dataset
            .dates
            .range(range.start..=range.end)
            .copied()
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let needed = config.coverage_threshold * candidates.len() as f64 - 1e-9;

        let mut retained: Vec<(&str, &BTreeMap<NaiveDate, Decimal>)> = Vec::new();
        for (ticker, by_date) in &dataset.quotes {
            let quoted = by_date.range(range.start..=range.end).count();
            if quoted == 0 {
                continue;
            }
            if (quoted as f64) < needed {
                warn!(
                    "{}: dropping `{ticker}` (quoted on {quoted} of {} dates)",
                    range.label,
                    candidates.len()
                );
                notes.push(PartitionNote::TickerDropped {
                    window: range.label.clone(),
                    ticker: ticker.clone(),
                    quoted,
                    candidates: candidates.len(),
                });
            } else {
                retained.push((ticker, by_date));
            }
        }

        let grid: Vec<NaiveDate> = candidates
            .iter()
            .copied()
            .filter(|d| retained.iter().all(|(_, q)| q.contains_key(d)))
            .collect();

        if retained.is_empty() || grid.len() < 2 {
            let quotes = retained
                .iter()
                .map(|(_, q)| q.range(range.start..=range.end).count())
                .sum();
            warn!(
                "{}: skipped, {} grid date(s) across {} ticker(s)",
                range.label,
                grid.len(),
                retained.len()
            );
            notes.push(PartitionNote::WindowSkipped {
                window: range.label.clone(),
                grid_dates: grid.len(),
                quotes,
            });
            continue;
        }

        let mut series = Vec::with_capacity(retained.len());
        for (ticker, by_date) in &retained {
            let off_grid = by_date.range(range.start..=range.end).count() - grid.len();
            if off_grid > 0 {
                notes.push(PartitionNote::OffGrid {
                    window: range.label.clone(),
                    ticker: ticker.to_string(),
                    quotes: off_grid,
                });
            }
            let closes = grid.iter().map(|d| by_date[d]).collect();
            series.push(PriceSeries::new(*ticker, grid.clone(), closes)?);
        }
        windows.push(SampleWindow::new(range.label.clone(), series)?);
    }

    let outside = dataset
        .dates
        .iter()
        .filter(|d| !ranges.iter().any(|r| r.contains(**d)))
        .map(|d| dataset.quotes.values().filter(|q| q.contains_key(d)).count())
        .sum::<usize>();
    if outside > 0 {
        notes.push(PartitionNote::OutsideWindows { quotes: outside });
    }

    if windows.is_empty() {
        return Err(IngestError::NoAnalyzableWindows);
    }
    Ok(Partition { windows, notes })
}
