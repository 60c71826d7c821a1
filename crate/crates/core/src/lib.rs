//! Walk-forward backtesting engine for a single daily OHLC series.
//!
//! The pipeline runs from prices to fills: a smoothed trend/momentum regime
//! probability, EWMA volatility targeting, a friction-adjusted Kelly fraction,
//! ATR-based trade management, then linear and square-root impact costs. Each
//! out-of-sample slice runs on parameters frozen from its own training window.

pub mod analytics;
pub mod execution;
pub mod market_data;
pub mod signal;
pub mod synthetic;
pub mod sizing;
pub mod walkforward;
