//! Confidence bounds used by the monitors.
//!
//! [`clopper_pearson`] gives the exact binomial interval for the fraction of
//! pulses the two-threshold detector accepts. [`apn_interval`] is the
//! normal-approximation interval for the source mean from a series of
//! power-meter records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{binomial_lower_tail, binomial_upper_tail, normal_quantile};

/// Absolute tolerance on `p` for the bisection root finds.
pub const BISECTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("successes {successes} exceed trials {trials}")]
    SuccessesOutOfRange { successes: u64, trials: u64 },
    #[error("trials must be positive")]
    NoTrials,
    #[error("alpha = {0} must lie in (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("monitor transmittance xi = {0} must lie in (0, 1]")]
    XiOutOfRange(f64),
    #[error("record {0} is not finite")]
    NonFiniteRecord(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceResult {
    pub lower: f64,
    pub upper: f64,
    /// confidence level `1 - α`
    pub level: f64,
}

fn check_alpha(alpha: f64) -> Result<(), ConfidenceError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConfidenceError::AlphaOutOfRange(alpha))
    }
}

/// Root of a monotone function on `[0, 1]` by bisection. `increasing` gives
/// the direction; the returned end is the one on the conservative side of
/// the target (below it for a lower bound, above it for an upper bound).
fn bisect(f: impl Fn(f64) -> f64, target: f64, increasing: bool, want_low_end: bool) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // stop at the absolute tolerance, or earlier if lo/hi become adjacent
    // floats; keep going past 1e-12 while the root is tiny so small
    // proportions keep their relative precision
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let width = hi - lo;
        if width <= BISECTION_TOLERANCE && width <= 1e-9 * lo.min(1.0 - hi) {
            break;
        }
        let above = f(mid) > target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if want_low_end {
        lo
    } else {
        hi
    }
}

/// Lower Clopper-Pearson bound by bisection on `P(X ≥ x | p) = α/2`.
pub fn lower_bound_by_bisection(successes: u64, trials: u64, alpha: f64) -> f64 {
    if successes == 0 {
        return 0.0;
    }
    bisect(
        |p| binomial_upper_tail(successes, trials, p),
        alpha / 2.0,
        true,
        true,
    )
}

/// Upper Clopper-Pearson bound by bisection on `P(X ≤ x | p) = α/2`.
pub fn upper_bound_by_bisection(successes: u64, trials: u64, alpha: f64) -> f64 {
    if successes == trials {
        return 1.0;
    }
    bisect(
        |p| binomial_lower_tail(successes, trials, p),
        alpha / 2.0,
        false,
        false,
    )
}

/// Exact two-sided `1 - α` interval for a binomial proportion after
/// `successes` of `trials`.
///
/// The boundary cases are closed-form: `lower = 0` at zero successes,
/// `upper = 1` at `trials` successes, and the opposite ends are
/// `(α/2)^(1/M)` and `1 - (α/2)^(1/M)` respectively.
pub fn clopper_pearson(
    successes: u64,
    trials: u64,
    alpha: f64,
) -> Result<ConfidenceResult, ConfidenceError> {
    if trials == 0 {
        return Err(ConfidenceError::NoTrials);
    }
    if successes > trials {
        return Err(ConfidenceError::SuccessesOutOfRange { successes, trials });
    }
    check_alpha(alpha)?;
    let edge = (alpha / 2.0).powf(1.0 / trials as f64);
    let lower = if successes == 0 {
        0.0
    } else if successes == trials {
        edge
    } else {
        lower_bound_by_bisection(successes, trials, alpha)
    };
    let upper = if successes == trials {
        1.0
    } else if successes == 0 {
        1.0 - edge
    } else {
        upper_bound_by_bisection(successes, trials, alpha)
    };
    Ok(ConfidenceResult {
        lower,
        upper,
        level: 1.0 - alpha,
    })
}

/// Interval for the source mean `μ` from power-meter records of the monitor
/// photoelectron number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApnInterval {
    pub mu_lower: f64,
    pub mu_upper: f64,
    /// sample mean of the records, `⟨m⟩`
    pub mean: f64,
    /// standard error of the mean
    pub std_error: f64,
    pub level: f64,
    /// the records had zero spread, so the interval collapsed to a point
    pub degenerate: bool,
}

/// Two-sided normal interval `⟨m⟩ ∓ z(1-α/2) s/√n`, divided by `ξ`.
pub fn apn_interval(records: &[f64], xi: f64, alpha: f64) -> Result<ApnInterval, ConfidenceError> {
    if records.len() < 2 {
        return Err(ConfidenceError::TooFewRecords(records.len()));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(ConfidenceError::XiOutOfRange(xi));
    }
    check_alpha(alpha)?;
    if let Some(i) = records.iter().position(|r| !r.is_finite()) {
        return Err(ConfidenceError::NonFiniteRecord(i));
    }
    let n = records.len() as f64;
    let mean = records.iter().sum::<f64>() / n;
    let var = records.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let degenerate = var == 0.0;
    let half = if degenerate {
        0.0
    } else {
        normal_quantile(1.0 - alpha / 2.0) * std_error
    };
    Ok(ApnInterval {
        mu_lower: (mean - half) / xi,
        mu_upper: (mean + half) / xi,
        mean,
        std_error,
        level: 1.0 - alpha,
        degenerate,
    })
}
