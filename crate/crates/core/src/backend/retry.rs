use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

/// Exponential backoff with full jitter: the delay before retry attempt `r`
/// (0-based) is drawn uniformly from `[0, base * factor^r]`, so concurrent
/// clients do not stampede in lockstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the jitter window before retry `attempt` (0-based):
    /// base * factor^attempt, saturating on overflow.
    pub fn delay_cap_ms(&self, attempt: u32) -> u64 {
        let cap = self.base_delay_ms as f64 * self.factor.powi(attempt as i32);
        if cap >= u64::MAX as f64 {
            u64::MAX
        } else {
            cap as u64
        }
    }

    /// Full-jitter delay: uniform in `[0, delay_cap_ms(attempt)]`.
    pub fn jittered_delay_ms(&self, attempt: u32, rng: &mut SimRng) -> u64 {
        let cap = self.delay_cap_ms(attempt);
        rng.gen_range(cap + 1)
    }
}
