//! Regime, sub-period and calendar-year breakdowns of a ledger.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{perf_summary, AnalyticsError, PerfSummary};
use crate::execution::{LedgerRow, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: Regime,
    pub days: usize,
    pub share: f64,
    pub summary: Option<PerfSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub label: String,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub days: usize,
    pub summary: Option<PerfSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub regimes: Vec<RegimeRow>,
    pub periods: Vec<PeriodRow>,
}

fn period(label: String, rows: Vec<LedgerRow>) -> PeriodRow {
    PeriodRow {
        label,
        start: rows.first().map(|r| r.date),
        end: rows.last().map(|r| r.date),
        days: rows.len(),
        summary: perf_summary(&rows).ok(),
    }
}

/// Per-regime rows plus the full span and each `(label, start)` sub-span through the end.
pub fn attribution(ledger: &[LedgerRow], subperiods: &[(String, NaiveDate)]) -> Result<Attribution, AnalyticsError> {
    if ledger.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let regimes = [Regime::Bull, Regime::Chop, Regime::Bear]
        .into_iter()
        .map(|regime| {
            let rows: Vec<LedgerRow> = ledger.iter().copied().filter(|r| r.regime == regime).collect();
            RegimeRow {
                regime,
                days: rows.len(),
                share: rows.len() as f64 / ledger.len() as f64,
                summary: perf_summary(&rows).ok(),
            }
        })
        .collect();
    let mut periods = vec![period("full".into(), ledger.to_vec())];
    for (label, start) in subperiods {
        periods.push(period(label.clone(), ledger.iter().copied().filter(|r| r.date >= *start).collect()));
    }
    Ok(Attribution { regimes, periods })
}

/// One summary per calendar year; the rows partition the ledger.
pub fn yearly_summaries(ledger: &[LedgerRow]) -> Vec<PeriodRow> {
    let mut out: Vec<PeriodRow> = Vec::new();
    let mut chunk: Vec<LedgerRow> = Vec::new();
    for row in ledger {
        if chunk.last().is_some_and(|last| last.date.year() != row.date.year()) {
            let year = chunk[0].date.year();
            out.push(period(year.to_string(), std::mem::take(&mut chunk)));
        }
        chunk.push(*row);
    }
    if let Some(first) = chunk.first() {
        let year = first.date.year();
        out.push(period(year.to_string(), chunk));
    }
    out
}
