//! Block resampling schemes and the Sharpe confidence interval.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{annualized_sharpe, mean, quantile, sample_std, AnalyticsError, TRADING_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point_sharpe: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    /// Resamples with a defined Sharpe (nonzero volatility).
    pub valid_resamples: usize,
    pub block_length: usize,
    pub seed: u64,
}

/// Independent generator for iteration `stream` of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circular moving-block resample of `n` indices with fixed block length.
pub fn circular_block_indices<R: Rng>(n: usize, block: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n);
    while idx.len() < n {
        let start = rng.random_range(0..n);
        for j in 0..block.min(n - idx.len()) {
            idx.push((start + j) % n);
        }
    }
    idx
}

/// Stationary bootstrap indices: geometric block lengths with the given mean.
pub fn stationary_indices<R: Rng>(n: usize, mean_block: f64, rng: &mut R) -> Vec<usize> {
    let p_new = 1.0 / mean_block;
    let mut idx = Vec::with_capacity(n);
    let mut cur = rng.random_range(0..n);
    idx.push(cur);
    while idx.len() < n {
        cur = if rng.random::<f64>() < p_new { rng.random_range(0..n) } else { (cur + 1) % n };
        idx.push(cur);
    }
    idx
}

/// Percentile 95% interval of the annualized Sharpe under circular block resampling.
pub fn block_bootstrap_sharpe(
    returns: &[f64],
    resamples: usize,
    block_length: usize,
    seed: u64,
) -> Result<BootstrapResult, AnalyticsError> {
    if block_length == 0 || resamples == 0 {
        return Err(AnalyticsError::Invalid("resamples and block_length must be positive".into()));
    }
    if returns.len() < 2 * block_length {
        return Err(AnalyticsError::TooShort { needed: 2 * block_length, got: returns.len() });
    }
    let point_sharpe = annualized_sharpe(returns)?;
    let draws: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let sample: Vec<f64> =
                circular_block_indices(returns.len(), block_length, &mut rng).into_iter().map(|j| returns[j]).collect();
            let sd = sample_std(&sample);
            (sd > 0.0).then(|| mean(&sample) / sd * TRADING_DAYS.sqrt())
        })
        .collect();
    let mut valid: Vec<f64> = draws.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(AnalyticsError::ZeroVol);
    }
    valid.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        point_sharpe,
        ci_low: quantile(&valid, 0.025),
        ci_high: quantile(&valid, 0.975),
        resamples,
        valid_resamples: valid.len(),
        block_length,
        seed,
    })
}
