//! Eve's best untrusted-source distribution when Alice only monitors the
//! mean photon number, and the multiphoton bound it implies at Alice's
//! output.
//!
//! With outgoing transmittance `η`, a pulse carrying `k` photons at the
//! source leaves Alice with more than one photon with probability
//! `a_k = 1 - (1-η)^k - kη(1-η)^(k-1)`. Eve maximizes `Σ a_k P(k)` subject to
//! `Σ k P(k) = μ` and `Σ P(k) = 1`, a two-row linear program whose optimum is
//! the upper concave envelope of the points `(k, a_k)` evaluated at `μ`.
//!
//! Writing `d_k = a_(k+1) - a_k = η² k (1-η)^(k-1)`, the ratio `a_k / k`
//! increases exactly while `k d_k > a_k`. Since `d_k` rises until
//! `k ≈ 1/η` and falls afterwards, `k d_k - a_k` changes sign once, so the
//! ratio is unimodal and its maximizer `k_s` can be found by bisection.
//! [`maximize_ratio_scan`] keeps the exhaustive scan as a cross-check.

mod simplex;

pub use simplex::{simplex_solve, LpError, LpInstance, LpSolution, MAX_COLUMNS, PIVOT_TOLERANCE};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorstCaseError {
    #[error("coefficient a_k needs k >= 2, got {0}")]
    KTooSmall(u64),
    #[error("transmittance eta = {0} must lie in (0, 1)")]
    EtaOutOfRange(f64),
    #[error("mean photon number {0} must be finite and non-negative")]
    InvalidMean(f64),
    #[error("a_k/k is still increasing at k_cap = {0}; raise the cap")]
    NotBracketed(u64),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Eve's optimal two-point source and the resulting bound on `P(n₂ > 1)`.
///
/// In the usual regime (`μ ≤ k_s`) the support is `{0, k_s}`; when `μ`
/// exceeds the ratio maximizer, the envelope runs along the concave part of
/// `a_k` and the support becomes `{⌊μ⌋, ⌈μ⌉}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseResult {
    pub p_multi_upper: f64,
    /// upper support point; equals the ratio maximizer `k_s` when `μ ≤ k_s`
    pub k_star: u64,
    /// lower support point, 0 when `μ ≤ k_s`
    pub lower_support: u64,
    /// `(P(n₁ = lower_support), P(n₁ = k_star))`
    pub weights: (f64, f64),
    /// maximizer of `a_k / k` over `2 ≤ k < k_cap`
    pub ratio_argmax: u64,
}

fn check_eta(eta: f64) -> Result<(), WorstCaseError> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(WorstCaseError::EtaOutOfRange(eta))
    }
}

/// `a_k = P(Binomial(k, η) ≥ 2)`.
pub fn coefficient_a(k: u64, eta: f64) -> Result<f64, WorstCaseError> {
    if k < 2 {
        return Err(WorstCaseError::KTooSmall(k));
    }
    check_eta(eta)?;
    Ok(multi_photon_coefficient(k, eta))
}

/// `a_k` without argument checks; `k ≤ 1` gives 0.
pub(crate) fn multi_photon_coefficient(k: u64, eta: f64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let kf = k as f64;
    if kf * eta <= 0.5 {
        // Upper binomial tail from j = 2; terms fall at least geometrically
        // by kη/(j+1)(1-η) so the sum is short and free of cancellation.
        let ratio = eta / (1.0 - eta);
        let mut term = 0.5 * kf * (kf - 1.0) * eta * eta * ((kf - 2.0) * (-eta).ln_1p()).exp();
        let mut sum = term;
        let mut j = 2.0;
        while j < kf {
            term *= (kf - j) / (j + 1.0) * ratio;
            let next = sum + term;
            if next == sum {
                break;
            }
            sum = next;
            j += 1.0;
        }
        sum
    } else {
        let l = (-eta).ln_1p();
        -(kf * l).exp_m1() - kf * eta * ((kf - 1.0) * l).exp()
    }
}

/// `a_(k+1) - a_k`.
fn coefficient_increment(k: u64, eta: f64) -> f64 {
    let kf = k as f64;
    eta * eta * kf * ((kf - 1.0) * (-eta).ln_1p()).exp()
}

/// `a_k / k` no longer increases after `k`: `a_(k+1)/(k+1) ≤ a_k/k`.
fn ratio_descends(k: u64, eta: f64) -> bool {
    k as f64 * coefficient_increment(k, eta) <= multi_photon_coefficient(k, eta)
}

/// Default scan limit `⌈20/η⌉`.
pub fn default_k_cap(eta: f64) -> u64 {
    (20.0 / eta).ceil() as u64
}

/// First `k ≥ 2` at which `a_k / k` stops increasing, found by bisection
/// over `[2, k_cap)`.
pub fn ratio_argmax(eta: f64, k_cap: u64) -> Result<u64, WorstCaseError> {
    check_eta(eta)?;
    if k_cap < 3 || !ratio_descends(k_cap - 1, eta) {
        return Err(WorstCaseError::NotBracketed(k_cap));
    }
    let (mut lo, mut hi) = (2u64, k_cap - 1);
    if ratio_descends(lo, eta) {
        return Ok(lo);
    }
    // invariant: !descends(lo) && descends(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ratio_descends(mid, eta) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Exhaustive maximizer of `a_k / k` over `2 ≤ k < k_cap`, ties to the
/// smaller `k`. Chunks are reduced deterministically, so the answer does not
/// depend on the rayon pool size.
pub fn ratio_argmax_scan(eta: f64, k_cap: u64) -> Result<u64, WorstCaseError> {
    check_eta(eta)?;
    const CHUNK: u64 = 1 << 16;
    if k_cap < 3 {
        return Err(WorstCaseError::NotBracketed(k_cap));
    }
    let chunks = (k_cap - 2).div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = 2 + c * CHUNK;
            let end = (start + CHUNK).min(k_cap);
            let mut best = (start, multi_photon_coefficient(start, eta) / start as f64);
            for k in start + 1..end {
                let g = multi_photon_coefficient(k, eta) / k as f64;
                if g > best.1 {
                    best = (k, g);
                }
            }
            best
        })
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    if best.0 + 1 >= k_cap {
        return Err(WorstCaseError::NotBracketed(k_cap));
    }
    Ok(best.0)
}

fn assemble(eta: f64, mu: f64, k_s: u64) -> WorstCaseResult {
    let a_s = multi_photon_coefficient(k_s, eta);
    if mu <= k_s as f64 {
        let w = mu / k_s as f64;
        return WorstCaseResult {
            p_multi_upper: a_s * w,
            k_star: k_s,
            lower_support: 0,
            weights: (1.0 - w, w),
            ratio_argmax: k_s,
        };
    }
    // k_s lies past the peak of d_k, so a_k is concave from k_s on and the
    // envelope at μ interpolates the neighbouring integers.
    let lo = mu.floor() as u64;
    let hi = mu.ceil() as u64;
    if lo == hi {
        return WorstCaseResult {
            p_multi_upper: multi_photon_coefficient(hi, eta),
            k_star: hi,
            lower_support: hi,
            weights: (0.0, 1.0),
            ratio_argmax: k_s,
        };
    }
    let w_hi = mu - lo as f64;
    let w_lo = 1.0 - w_hi;
    WorstCaseResult {
        p_multi_upper: w_lo * multi_photon_coefficient(lo, eta)
            + w_hi * multi_photon_coefficient(hi, eta),
        k_star: hi,
        lower_support: lo,
        weights: (w_lo, w_hi),
        ratio_argmax: k_s,
    }
}

fn check_mu(mu: f64) -> Result<(), WorstCaseError> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(WorstCaseError::InvalidMean(mu))
    }
}

/// Upper bound on the multiphoton probability at Alice's output when the
/// source mean is `mu` and Eve controls everything else. `k_cap` defaults to
/// [`default_k_cap`].
pub fn maximize_ratio(
    eta: f64,
    mu: f64,
    k_cap: Option<u64>,
) -> Result<WorstCaseResult, WorstCaseError> {
    check_mu(mu)?;
    let k_s = ratio_argmax(eta, k_cap.unwrap_or_else(|| default_k_cap(eta)))?;
    Ok(assemble(eta, mu, k_s))
}

/// [`maximize_ratio`] with the maximizer found by exhaustive scan.
pub fn maximize_ratio_scan(
    eta: f64,
    mu: f64,
    k_cap: Option<u64>,
) -> Result<WorstCaseResult, WorstCaseError> {
    check_mu(mu)?;
    let k_s = ratio_argmax_scan(eta, k_cap.unwrap_or_else(|| default_k_cap(eta)))?;
    Ok(assemble(eta, mu, k_s))
}

impl LpInstance {
    /// Eve's program truncated to source photon numbers `0..columns`.
    pub fn worst_case(eta: f64, mu: f64, columns: usize) -> Result<Self, WorstCaseError> {
        check_eta(eta)?;
        check_mu(mu)?;
        let objective = (0..columns as u64)
            .map(|k| multi_photon_coefficient(k, eta))
            .collect();
        let constraints = vec![(0..columns).map(|k| k as f64).collect(), vec![1.0; columns]];
        Ok(Self {
            objective,
            constraints,
            rhs: vec![mu, 1.0],
        })
    }
}
