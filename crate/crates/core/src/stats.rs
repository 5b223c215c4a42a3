//! Binomial rate estimates used by the campaign reports.

use serde::{Deserialize, Serialize};

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Observed proportion with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Rate {
    pub fn new(successes: u64, trials: u64) -> Self {
        let (lower, upper) = wilson_interval(successes, trials, Z95);
        let rate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        Rate {
            successes,
            trials,
            rate,
            lower,
            upper,
        }
    }
}

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
///
/// Returns `(0, 1)` for zero trials.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    // The bounds are exact at the extremes; avoid rounding residue there.
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lower, upper)
}

/// Standard deviation of the observed proportion of a Binomial(n, p).
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// `true` iff `observed` lies within `k` standard deviations of `p`.
pub fn within_sigmas(observed: f64, p: f64, trials: u64, k: f64) -> bool {
    (observed - p).abs() <= k * binomial_sigma(p, trials)
}
