//! Seeded Monte Carlo estimate of the expected wrap count, the fallback for
//! sizes beyond exact mode and the sanity oracle for the closed forms.

use super::AnalyticsError;
use crate::rng::{domain, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

const SHARD: u64 = 1 << 16;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Estimates `E[D_Kq]` under uniform inputs with `samples` draws.
///
/// Sampling is sharded; shard `i` draws from the substream
/// `(seed, MONTE_CARLO, i)` and the per-shard integer tallies are reduced in
/// shard order, so the estimate is bit-reproducible for a given seed
/// regardless of how shards are scheduled.
pub fn monte_carlo_wraps(
    n: usize,
    q: u64,
    k: u64,
    samples: u64,
    seed: u64,
) -> Result<WrapEstimate, AnalyticsError> {
    if n == 0 {
        return Err(AnalyticsError::ZeroLength);
    }
    if q < 2 {
        return Err(AnalyticsError::ModulusTooSmall(q));
    }
    if k < 1 {
        return Err(AnalyticsError::FactorTooSmall(k));
    }
    if samples == 0 {
        return Err(AnalyticsError::NoSamples);
    }
    let kq = k as u128 * q as u128;

    let mut total: u128 = 0;
    let mut total_sq: u128 = 0;
    let shards = samples.div_ceil(SHARD);
    for shard in 0..shards {
        let mut rng = stream(seed, domain::MONTE_CARLO, shard);
        let in_shard = SHARD.min(samples - shard * SHARD);
        for _ in 0..in_shard {
            let mut sum: u128 = 0;
            for _ in 0..n {
                sum += rng.gen_range(0..q) as u128;
            }
            let wraps = sum / kq;
            total += wraps;
            total_sq += wraps * wraps;
        }
    }

    let count = samples as f64;
    let mean = total as f64 / count;
    let stderr = if samples > 1 {
        let var = (total_sq as f64 - count * mean * mean) / (count - 1.0);
        (var.max(0.0) / count).sqrt()
    } else {
        0.0
    };
    Ok(WrapEstimate {
        mean,
        stderr,
        samples,
        seed,
    })
}
