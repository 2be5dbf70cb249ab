//! Lower bounds on the untagged fraction `1 - δ` from a noisy two-threshold
//! measurement.
//!
//! The monitor sees `m' = m + noise` and counts pulses with
//! `m1 ≤ m' ≤ m2`. Knowing the noise law, the measured acceptance
//! probability brackets the true window mass `Σ_{m1}^{m2} D(m)`:
//! pulses outside the window leak in with probability at most `b̄` (Poisson)
//! or `b1` (Gaussian), and pulses inside are kept with probability at least
//! `b` or `b2`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::special::{
    ln_poisson_pmf, normal_cdf, poisson_cdf, poisson_pmf, poisson_support_band,
    poisson_window_mass, CompensatedSum,
};

/// Denominators below this make the bound degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-15;

/// Window offsets up to this many are scanned instead of bisected.
const FULL_SCAN_LIMIT: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("threshold window needs m1 < m2, got [{0}, {1}]")]
    EmptyWindow(u64, u64),
    #[error("poisson noise mean gamma = {0} must be positive")]
    BadGamma(f64),
    #[error("gaussian noise variance sigma2 = {0} must be positive")]
    BadSigma2(f64),
}

/// Additive detection noise of the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    None,
    /// dark counts, `d ~ Poisson(γ)` added to `m`
    Poisson {
        gamma: f64,
    },
    /// electronic noise, `x ~ Normal(0, σ²)` added to `m`
    Gaussian {
        sigma2: f64,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), NoiseError> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Poisson { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            NoiseModel::Poisson { gamma } => Err(NoiseError::BadGamma(gamma)),
            NoiseModel::Gaussian { sigma2 } if sigma2 > 0.0 && sigma2.is_finite() => Ok(()),
            NoiseModel::Gaussian { sigma2 } => Err(NoiseError::BadSigma2(sigma2)),
        }
    }

    /// Monitor signal-to-noise ratio `⟨m⟩/γ` or `⟨m⟩/σ²`; infinite without noise.
    pub fn snr(&self, mean_count: f64) -> f64 {
        match *self {
            NoiseModel::None => f64::INFINITY,
            NoiseModel::Poisson { gamma } => mean_count / gamma,
            NoiseModel::Gaussian { sigma2 } => mean_count / sigma2,
        }
    }
}

/// Photoelectron thresholds `[m1, m2]` of the two comparators, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdWindow {
    pub m1: u64,
    pub m2: u64,
}

impl ThresholdWindow {
    pub fn new(m1: u64, m2: u64) -> Result<Self, NoiseError> {
        if m1 < m2 {
            Ok(Self { m1, m2 })
        } else {
            Err(NoiseError::EmptyWindow(m1, m2))
        }
    }

    pub fn width(&self) -> u64 {
        self.m2 - self.m1
    }

    pub fn contains(&self, m: f64) -> bool {
        m >= self.m1 as f64 && m <= self.m2 as f64
    }
}

/// A bound on `1 - δ` together with the degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UntaggedBound {
    pub value: f64,
    /// the bracket denominator vanished and the bound carries no information
    pub degenerate: bool,
}

/// `S(j) = P(j ≤ d ≤ j + w)` for `d ~ Poisson(γ)`.
fn offset_mass(j: u64, width: u64, gamma: f64) -> f64 {
    poisson_window_mass(j, j + width, gamma)
}

/// `S(j+1) < S(j)`, i.e. `N(j+w+1) < N(j)`. Log-concavity of the Poisson pmf
/// makes this false then true as `j` grows.
fn offset_descends(j: u64, width: u64, gamma: f64) -> bool {
    ln_poisson_pmf((j + width + 1) as f64, gamma) < ln_poisson_pmf(j as f64, gamma)
}

/// Largest probability that a pulse with `m < m1` is pushed into the window
/// by dark counts: the maximum over `m ∈ [0, m1-1]` of
/// `Σ_{d=m1-m}^{m2-m} N(d)`.
pub fn poisson_bbar(w: ThresholdWindow, gamma: f64) -> f64 {
    if w.m1 == 0 {
        return 0.0;
    }
    let width = w.width();
    // offsets j = m1 - m run over [1, m1]
    if w.m1 <= FULL_SCAN_LIMIT {
        return (1..=w.m1)
            .map(|j| offset_mass(j, width, gamma))
            .fold(0.0, f64::max);
    }
    let j_star = if !offset_descends(w.m1 - 1, width, gamma) {
        w.m1
    } else {
        // smallest j in [1, m1-1] with S(j+1) < S(j)
        let (mut lo, mut hi) = (1u64, w.m1 - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if offset_descends(mid, width, gamma) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    };
    offset_mass(j_star, width, gamma)
}

/// [`poisson_bbar`] by evaluating every offset; a test oracle.
pub fn poisson_bbar_scan(w: ThresholdWindow, gamma: f64) -> f64 {
    (1..=w.m1)
        .map(|j| offset_mass(j, w.width(), gamma))
        .fold(0.0, f64::max)
}

/// Smallest probability that a pulse inside the window stays inside:
/// `P(d ≤ m2)`.
pub fn poisson_b(m2: u64, gamma: f64) -> f64 {
    poisson_cdf(m2, gamma)
}

fn bracket(p_measured_lower: f64, leak: f64, keep: f64) -> UntaggedBound {
    let denom = keep - leak;
    if denom < DEGENERACY_THRESHOLD {
        return UntaggedBound {
            value: 0.0,
            degenerate: true,
        };
    }
    UntaggedBound {
        value: ((p_measured_lower - leak) / denom).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// `1 - δ ≥ (p_l - b̄)/(b - b̄)` under Poisson dark counts.
pub fn untagged_lower_bound_poisson(
    p_measured_lower: f64,
    w: ThresholdWindow,
    gamma: f64,
) -> UntaggedBound {
    let bbar = poisson_bbar(w, gamma);
    let b = poisson_b(w.m2, gamma);
    assert!(
        b >= bbar,
        "b(m2) = {b} fell below bbar = {bbar} for {w:?}, gamma = {gamma}"
    );
    bracket(p_measured_lower, bbar, b)
}

/// The three Gaussian leak/keep probabilities:
/// `b1 = ∫_0^{w} G`, `b2 = ∫_{-w/2}^{w/2} G`, `b3 = ∫_{-w-1}^{-1} G`,
/// with `w = m2 - m1` and `G` the Normal(0, σ²) density.
pub fn gaussian_b123(w: ThresholdWindow, sigma2: f64) -> (f64, f64, f64) {
    let scale = (2.0 * sigma2).sqrt();
    let width = w.width() as f64;
    // half-erf differences keep full precision when σ dwarfs the window
    let b1 = 0.5 * erf(width / scale);
    let b2 = erf(width / (2.0 * scale));
    let b3 = 0.5 * (erf((width + 1.0) / scale) - erf(1.0 / scale));
    let slack = 4.0 * f64::EPSILON * b2;
    assert!(
        b2 + slack >= b1 && b1 + slack >= b3,
        "gaussian coefficients out of order: b1 = {b1}, b2 = {b2}, b3 = {b3}"
    );
    (b1, b2, b3)
}

/// `1 - δ ≥ (p_l - b1)/(b2 - b1)` under Gaussian electronic noise.
pub fn untagged_lower_bound_gaussian(
    p_measured_lower: f64,
    w: ThresholdWindow,
    sigma2: f64,
) -> UntaggedBound {
    let (b1, b2, _) = gaussian_b123(w, sigma2);
    bracket(p_measured_lower, b1, b2)
}

/// Dispatch on the noise model. Without noise the measured lower bound is
/// already a bound on the window mass.
pub fn untagged_lower_bound(
    p_measured_lower: f64,
    w: ThresholdWindow,
    noise: &NoiseModel,
) -> UntaggedBound {
    match *noise {
        NoiseModel::None => UntaggedBound {
            value: p_measured_lower.clamp(0.0, 1.0),
            degenerate: false,
        },
        NoiseModel::Poisson { gamma } => untagged_lower_bound_poisson(p_measured_lower, w, gamma),
        NoiseModel::Gaussian { sigma2 } => {
            untagged_lower_bound_gaussian(p_measured_lower, w, sigma2)
        }
    }
}

/// `P(m1 ≤ m + noise ≤ m2)` when `m ~ Poisson(mean)`.
pub fn measured_window_probability(mean: f64, w: ThresholdWindow, noise: &NoiseModel) -> f64 {
    match *noise {
        NoiseModel::None => poisson_window_mass(w.m1, w.m2, mean),
        // a sum of independent Poissons is Poisson
        NoiseModel::Poisson { gamma } => poisson_window_mass(w.m1, w.m2, mean + gamma),
        NoiseModel::Gaussian { sigma2 } => {
            let sigma = sigma2.sqrt();
            let (lo, hi) = poisson_support_band(mean);
            let mut acc = CompensatedSum::default();
            for m in lo..=hi {
                let x = m as f64;
                let pass =
                    normal_cdf((w.m2 as f64 - x) / sigma) - normal_cdf((w.m1 as f64 - x) / sigma);
                acc.add(poisson_pmf(x, mean) * pass);
            }
            acc.value().clamp(0.0, 1.0)
        }
    }
}
