//! Daily OHLC ingestion, business-day calendar alignment and return construction.
//!
//! Prices are forward-filled across calendar days that have no observation;
//! returns are always recomputed from the (filled) prices, so a filled day
//! carries a return of exactly zero.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column '{0}' in CSV header")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("non-positive price at line {line} ({field} = {value})")]
    NonPositivePrice {
        line: u64,
        field: &'static str,
        value: f64,
    },
    #[error("duplicate date {date} at line {line}")]
    UnsortedDuplicateDate { line: u64, date: NaiveDate },
    #[error("calendar day {0} precedes the first observation; nothing to carry forward")]
    LeadingGap(NaiveDate),
    #[error("series too short: need at least {needed} bars, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid bar on {date}: {reason}")]
    InvalidBar { date: NaiveDate, reason: String },
}

/// One daily OHLC observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl Bar {
    pub fn new(date: NaiveDate, open: f64, high: f64, low: f64, close: f64) -> Result<Self, DataError> {
        let bar = Self { date, open, high, low, close };
        bar.check().map_err(|reason| DataError::InvalidBar { date, reason })?;
        Ok(bar)
    }

    /// Flat bar with O=H=L=C, used for forward-filled days.
    pub fn flat(date: NaiveDate, price: f64) -> Self {
        Self { date, open: price, high: price, low: price, close: price }
    }

    fn check(&self) -> Result<(), String> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
            if v <= 0.0 {
                return Err(format!("{name} = {v} is not positive"));
            }
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, f64); 4] {
        [("open", self.open), ("high", self.high), ("low", self.low), ("close", self.close)]
    }
}

/// Weekday calendar minus an explicit holiday list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusinessCalendar {
    pub name: String,
    pub holidays: BTreeSet<NaiveDate>,
}

impl BusinessCalendar {
    pub fn weekdays() -> Self {
        Self { name: "weekdays".to_string(), holidays: BTreeSet::new() }
    }

    pub fn with_holidays(name: impl Into<String>, holidays: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self { name: name.into(), holidays: holidays.into_iter().collect() }
    }

    /// Reads one ISO date per line; blank lines and `#` comments are skipped.
    pub fn load_holidays(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut holidays = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let d = NaiveDate::parse_from_str(line, DATE_FORMAT).map_err(|e| DataError::MalformedRow {
                line: i as u64 + 1,
                reason: format!("bad holiday date '{line}': {e}"),
            })?;
            holidays.insert(d);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "holidays".into());
        Ok(Self { name, holidays })
    }

    pub fn is_business_day(&self, d: NaiveDate) -> bool {
        !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !self.holidays.contains(&d)
    }

    /// Business days in the inclusive range.
    pub fn days(&self, span: RangeInclusive<NaiveDate>) -> Vec<NaiveDate> {
        let (start, end) = (*span.start(), *span.end());
        start
            .iter_days()
            .take_while(|d| *d <= end)
            .filter(|d| self.is_business_day(*d))
            .collect()
    }
}

/// Ordered daily bars with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    bars: Vec<Bar>,
    calendar: String,
}

impl PriceSeries {
    /// Validates bars and ordering.
    pub fn new(bars: Vec<Bar>, calendar: impl Into<String>) -> Result<Self, DataError> {
        for (i, bar) in bars.iter().enumerate() {
            bar.check().map_err(|reason| DataError::InvalidBar { date: bar.date, reason })?;
            if i > 0 && bars[i - 1].date >= bar.date {
                return Err(DataError::UnsortedDuplicateDate { line: i as u64 + 1, date: bar.date });
            }
        }
        Ok(Self { bars, calendar: calendar.into() })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn calendar(&self) -> &str {
        &self.calendar
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    /// Bars whose date falls in the inclusive range.
    pub fn slice(&self, span: RangeInclusive<NaiveDate>) -> PriceSeries {
        let bars = self.bars.iter().filter(|b| span.contains(&b.date)).copied().collect();
        PriceSeries { bars, calendar: self.calendar.clone() }
    }

    /// First `n` bars.
    pub fn prefix(&self, n: usize) -> PriceSeries {
        PriceSeries { bars: self.bars[..n.min(self.bars.len())].to_vec(), calendar: self.calendar.clone() }
    }
}

/// Simple close-to-close returns; `dates[i]` is the day the return is realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// CSV column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<PriceSeries, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    read_csv(file, schema)
}

/// Parses OHLC rows from any reader. Rows may arrive in any order; the result
/// is sorted by date, and a repeated date is rejected.
pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<PriceSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let idx = [col(&schema.date)?, col(&schema.open)?, col(&schema.high)?, col(&schema.low)?, col(&schema.close)?];

    let mut rows: Vec<(u64, Bar)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(idx[0]), DATE_FORMAT).map_err(|e| DataError::MalformedRow {
            line,
            reason: format!("bad date '{}': {e}", field(idx[0])),
        })?;
        let mut px = [0.0; 4];
        const NAMES: [&str; 4] = ["open", "high", "low", "close"];
        for (k, slot) in px.iter_mut().enumerate() {
            let raw = field(idx[k + 1]);
            let v: f64 = raw.parse().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("{} '{raw}' is not a number", NAMES[k]),
            })?;
            if !v.is_finite() {
                return Err(DataError::MalformedRow { line, reason: format!("{} is not finite", NAMES[k]) });
            }
            if v <= 0.0 {
                return Err(DataError::NonPositivePrice { line, field: NAMES[k], value: v });
            }
            *slot = v;
        }
        let bar = Bar { date, open: px[0], high: px[1], low: px[2], close: px[3] };
        bar.check().map_err(|reason| DataError::MalformedRow { line, reason })?;
        rows.push((line, bar));
    }

    rows.sort_by_key(|(_, b)| b.date);
    for w in rows.windows(2) {
        if w[0].1.date == w[1].1.date {
            let line = w[0].0.max(w[1].0);
            return Err(DataError::UnsortedDuplicateDate { line, date: w[1].1.date });
        }
    }
    Ok(PriceSeries { bars: rows.into_iter().map(|(_, b)| b).collect(), calendar: "raw".into() })
}

/// Reindexes `series` onto every business day of `span`. Days without an
/// observation get a flat bar at the previous close; off-calendar bars are dropped.
pub fn align_calendar(
    series: &PriceSeries,
    calendar: &BusinessCalendar,
    span: RangeInclusive<NaiveDate>,
) -> Result<PriceSeries, DataError> {
    let days = calendar.days(span);
    let bars = series.bars();
    let mut out = Vec::with_capacity(days.len());
    let mut j = 0;
    let mut last: Option<f64> = None;
    for day in days {
        // off-calendar bars never feed the carried price
        while j < bars.len() && bars[j].date < day {
            j += 1;
        }
        if j < bars.len() && bars[j].date == day {
            out.push(bars[j]);
            last = Some(bars[j].close);
            j += 1;
        } else {
            match last {
                Some(p) => out.push(Bar::flat(day, p)),
                None => return Err(DataError::LeadingGap(day)),
            }
        }
    }
    Ok(PriceSeries { bars: out, calendar: calendar.name.clone() })
}

/// Aligns over the series' own first..last date.
pub fn align_to_calendar(series: &PriceSeries, calendar: &BusinessCalendar) -> Result<PriceSeries, DataError> {
    match (series.first_date(), series.last_date()) {
        (Some(a), Some(b)) => align_calendar(series, calendar, a..=b),
        _ => Ok(PriceSeries { bars: Vec::new(), calendar: calendar.name.clone() }),
    }
}

pub fn simple_returns(series: &PriceSeries) -> Result<ReturnSeries, DataError> {
    let bars = series.bars();
    if bars.len() < 2 {
        return Err(DataError::TooShort { needed: 2, got: bars.len() });
    }
    let (dates, values) = bars.windows(2).map(|w| (w[1].date, w[1].close / w[0].close - 1.0)).unzip();
    Ok(ReturnSeries { dates, values })
}

/// Natural log of each close.
/// Writes bars with the default column names; floats round-trip exactly.
pub fn write_csv<W: Write>(series: &PriceSeries, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "open", "high", "low", "close"])?;
    for b in series.bars() {
        wtr.write_record([
            b.date.format(DATE_FORMAT).to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn log_prices(series: &PriceSeries) -> Vec<(NaiveDate, f64)> {
    series.bars().iter().map(|b| (b.date, b.close.ln())).collect()
}
