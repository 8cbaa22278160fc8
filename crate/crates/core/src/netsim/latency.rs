use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-link one-way message delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatencyModel {
    Fixed { ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
}

impl LatencyModel {
    pub fn fixed(ms: f64) -> Self {
        LatencyModel::Fixed { ms }
    }

    pub fn uniform(min_ms: f64, max_ms: f64) -> Self {
        LatencyModel::Uniform { min_ms, max_ms }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            LatencyModel::Fixed { ms } => ms.is_finite() && ms >= 0.0,
            LatencyModel::Uniform { min_ms, max_ms } => {
                min_ms.is_finite() && max_ms.is_finite() && min_ms >= 0.0 && min_ms <= max_ms
            }
        }
    }

    /// Inclusive bounds in whole microseconds.
    pub fn bounds_us(&self) -> (u64, u64) {
        let us = |ms: f64| (ms * 1_000.0).round() as u64;
        match *self {
            LatencyModel::Fixed { ms } => (us(ms), us(ms)),
            LatencyModel::Uniform { min_ms, max_ms } => (us(min_ms), us(max_ms)),
        }
    }

    pub fn max_ms(&self) -> f64 {
        self.bounds_us().1 as f64 / 1_000.0
    }

    pub fn sample_us<R: Rng>(&self, rng: &mut R) -> u64 {
        let (lo, hi) = self.bounds_us();
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    }
}
