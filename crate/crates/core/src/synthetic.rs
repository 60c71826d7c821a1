//! Seeded geometric random walk with injected trend segments, for tests and demos.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::market_data::{Bar, BusinessCalendar, DataError, PriceSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub initial_price: f64,
    pub daily_vol: f64,
    /// Annualized drift magnitude inside a trend segment.
    pub trend_drift_annual: f64,
    /// Drift outside trend segments.
    pub base_drift_annual: f64,
    /// Chance that a new segment trends rather than drifts at the base rate.
    pub trend_share: f64,
    /// Chance that a trend segment points up.
    pub up_probability: f64,
    pub segment_min_days: usize,
    pub segment_max_days: usize,
    /// Typical high-low range as a fraction of price.
    pub intraday_range: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2004, 12, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2025, 12, 31).unwrap(),
            initial_price: 1200.0,
            daily_vol: 0.009,
            trend_drift_annual: 0.35,
            base_drift_annual: 0.0,
            trend_share: 0.5,
            up_probability: 0.6,
            segment_min_days: 40,
            segment_max_days: 160,
            intraday_range: 0.006,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.end <= self.start {
            return Err("synthetic.end must be after synthetic.start".into());
        }
        if !(self.initial_price > 0.0) {
            return Err("synthetic.initial_price must be positive".into());
        }
        if !(self.daily_vol >= 0.0) || !(self.intraday_range >= 0.0) {
            return Err("synthetic.daily_vol and synthetic.intraday_range must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.trend_share) || !(0.0..=1.0).contains(&self.up_probability) {
            return Err("synthetic.trend_share and synthetic.up_probability must be in [0, 1]".into());
        }
        if self.segment_min_days == 0 || self.segment_max_days < self.segment_min_days {
            return Err("synthetic segment lengths need 1 <= segment_min_days <= segment_max_days".into());
        }
        Ok(())
    }
}

/// Generates weekday OHLC bars. The same spec always yields the same series.
pub fn generate(spec: &SyntheticSpec) -> Result<PriceSeries, DataError> {
    spec.validate().map_err(|reason| DataError::InvalidBar { date: spec.start, reason })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dates = BusinessCalendar::weekdays().days(spec.start..=spec.end);
    let sigma = spec.daily_vol;
    let mut close = spec.initial_price;
    let mut remaining = 0usize;
    let mut drift = 0.0;
    let mut bars = Vec::with_capacity(dates.len());

    for (t, date) in dates.into_iter().enumerate() {
        if remaining == 0 {
            remaining = rng.random_range(spec.segment_min_days..=spec.segment_max_days);
            drift = if rng.random::<f64>() < spec.trend_share {
                let up = rng.random::<f64>() < spec.up_probability;
                if up { spec.trend_drift_annual } else { -spec.trend_drift_annual }
            } else {
                spec.base_drift_annual
            } / 252.0;
        }
        remaining -= 1;

        let prev = close;
        if t > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            close = prev * (drift - 0.5 * sigma * sigma + sigma * z).exp();
        }
        let gap: f64 = StandardNormal.sample(&mut rng);
        let open = prev * (0.25 * sigma * gap).exp();
        let up: f64 = StandardNormal.sample(&mut rng);
        let down: f64 = StandardNormal.sample(&mut rng);
        let high = open.max(close) * (1.0 + 0.5 * spec.intraday_range * up.abs());
        let low = open.min(close) * (1.0 - 0.5 * spec.intraday_range * down.abs()).max(0.5);
        bars.push(Bar::new(date, open, high, low, close)?);
    }
    PriceSeries::new(bars, "weekdays")
}
