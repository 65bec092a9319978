//! Price data: CSV ingestion, per-window scaling and the synthetic TEST
//! stock.

use std::path::Path;

use chrono::{NaiveDate, NaiveTime};

use crate::error::{Error, Result};
use crate::rounding::RandomSource;

/// Reflection floor keeping simulated raw prices strictly positive.
const TEST_PRICE_FLOOR: f64 = 1e-6;

/// A raw per-minute price series for one ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub ticker: String,
    /// Minutes since the Unix epoch, strictly increasing.
    pub timestamps: Vec<i64>,
    /// Raw prices, strictly positive.
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Parses a `ticker,date,time,close` CSV into a single-ticker series.
///
/// Dates are `YYYYMMDD`, times `HHMM`, closes positive decimals.
/// Timestamps must be strictly increasing; the first violation is reported
/// with its line number.
pub fn ingest_csv(path: &Path) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;

    {
        let headers = reader
            .headers()
            .map_err(|e| Error::data(format!("unreadable header: {e}")))?;
        let expected = ["ticker", "date", "time", "close"];
        let found: Vec<&str> = headers.iter().collect();
        if found != expected {
            return Err(Error::data(format!(
                "expected header {expected:?}, found {found:?}"
            )));
        }
    }

    let mut ticker: Option<String> = None;
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let row_ticker = record[0].to_string();
        match &ticker {
            None => ticker = Some(row_ticker),
            Some(t) if *t != row_ticker => {
                return Err(Error::data(format!(
                    "line {line}: mixed tickers {t} and {row_ticker}; one series per file"
                )));
            }
            _ => {}
        }

        if record[1].len() != 8 {
            return Err(Error::Parse {
                line,
                message: format!("date {:?} is not YYYYMMDD", &record[1]),
            });
        }
        let date = NaiveDate::parse_from_str(&record[1], "%Y%m%d").map_err(|e| Error::Parse {
            line,
            message: format!("bad date {:?}: {e}", &record[1]),
        })?;
        if record[2].len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("time {:?} is not HHMM", &record[2]),
            });
        }
        let time = NaiveTime::parse_from_str(&record[2], "%H%M").map_err(|e| Error::Parse {
            line,
            message: format!("bad time {:?}: {e}", &record[2]),
        })?;
        let minute = date.and_time(time).and_utc().timestamp() / 60;

        let close: f64 = record[3].parse().map_err(|e| Error::Parse {
            line,
            message: format!("bad close {:?}: {e}", &record[3]),
        })?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::data(format!("line {line}: close {close} must be positive")));
        }
        if let Some(&last) = timestamps.last() {
            if minute <= last {
                return Err(Error::data(format!(
                    "line {line}: timestamp not strictly increasing"
                )));
            }
        }
        timestamps.push(minute);
        prices.push(close);
    }
    let ticker = ticker.ok_or_else(|| Error::data("no data rows"))?;
    Ok(PriceSeries {
        ticker,
        timestamps,
        prices,
    })
}

/// A raw window rescaled by `c · max` over its warmup prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledWindow {
    /// Scaled values in `[0,1]`.
    pub values: Vec<f64>,
    /// The divisor `c · max_{1≤j≤L_shift} Ŝ_j`.
    pub scale_constant: f64,
    /// How many values exceeded 1 and were clamped.
    pub clamp_count: usize,
}

/// Scales a raw window by `c` times the warmup maximum, clamping overshoots
/// to 1 and counting them.
pub fn scale_window(raw: &[f64], l_shift: usize, c: f64) -> Result<ScaledWindow> {
    if l_shift == 0 || l_shift > raw.len() {
        return Err(Error::config(format!(
            "warmup length {l_shift} must lie in 1..={}",
            raw.len()
        )));
    }
    if c <= 0.0 {
        return Err(Error::config("scaling constant must be positive"));
    }
    let warmup_max = raw[..l_shift].iter().cloned().fold(f64::MIN, f64::max);
    if !(warmup_max.is_finite() && warmup_max > 0.0) {
        return Err(Error::data("warmup prices must be positive"));
    }
    let scale_constant = c * warmup_max;
    let mut clamp_count = 0;
    let values = raw
        .iter()
        .map(|&s| {
            let scaled = s / scale_constant;
            if scaled > 1.0 {
                clamp_count += 1;
                1.0
            } else {
                scaled
            }
        })
        .collect();
    Ok(ScaledWindow {
        values,
        scale_constant,
        clamp_count,
    })
}

/// Simulates the TEST stock: a Gaussian random walk `S_i = S_{i-1} + ξ_i`
/// with `ξ_i ~ N(0, σ²)`, reflected at a small positive floor.
pub fn simulate_test_stock(n: usize, sigma: f64, s0: f64, rng: &mut RandomSource) -> PriceSeries {
    let mut prices = Vec::with_capacity(n);
    let mut current = s0.max(TEST_PRICE_FLOOR);
    for _ in 0..n {
        prices.push(current);
        let mut next = current + sigma * rng.standard_normal();
        if next < TEST_PRICE_FLOOR {
            next = TEST_PRICE_FLOOR + (TEST_PRICE_FLOOR - next);
        }
        current = next;
    }
    PriceSeries {
        ticker: "TEST".into(),
        timestamps: (0..n as i64).collect(),
        prices,
    }
}
