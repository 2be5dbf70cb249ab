//! Photon-number distributions and the Bernoulli (loss) transform that maps
//! a distribution at one position of the passive scheme to another.
//!
//! Distributions are truncated at `n_max` and carry the probability of
//! `n > n_max` explicitly as `tail_mass`. Every bound downstream treats that
//! tail pessimistically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{ln_binomial_pmf, poisson_pmf, poisson_support_band, CompensatedSum};

/// Largest tail mass a Poisson distribution may leave beyond `n_max`.
pub const POISSON_TAIL_TOLERANCE: f64 = 1e-12;

const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonStatsError {
    #[error("mean photon number must be positive and finite, got {0}")]
    NonPositiveMean(f64),
    #[error(
        "n_max = {n_max} leaves tail mass {tail:e} above tolerance {POISSON_TAIL_TOLERANCE:e}"
    )]
    TailTooLarge { n_max: usize, tail: f64 },
    #[error("transmittance {0} outside [0, 1]")]
    TransmittanceOutOfRange(f64),
    #[error("probability at n = {index} is {value}, expected a finite non-negative number")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0} (including tail), expected 1")]
    NotNormalized(f64),
    #[error("distribution must have at least one entry")]
    Empty,
    #[error("invalid passive scheme: {0}")]
    InvalidScheme(String),
}

/// Truncated photon-number distribution `P(n)`, `n = 0..=n_max`, plus the
/// probability of `n > n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl PhotonNumberDistribution {
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self, PhotonStatsError> {
        if probs.is_empty() {
            return Err(PhotonStatsError::Empty);
        }
        if let Some((index, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(PhotonStatsError::InvalidProbability { index, value });
        }
        if !tail_mass.is_finite() || tail_mass < 0.0 {
            return Err(PhotonStatsError::InvalidProbability {
                index: probs.len(),
                value: tail_mass,
            });
        }
        let mut total = CompensatedSum::default();
        probs.iter().for_each(|&p| total.add(p));
        total.add(tail_mass);
        let total = total.value();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(PhotonStatsError::NotNormalized(total));
        }
        Ok(Self { probs, tail_mass })
    }

    /// All probability on `n`.
    pub fn point_mass(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self {
            probs,
            tail_mass: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// `P(n)`, zero beyond `n_max` (that mass lives in the tail).
    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// `Σ n P(n)` over the represented entries. The tail is excluded; its
    /// mass is reported by [`Self::tail_mass`].
    pub fn mean(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for (n, &p) in self.probs.iter().enumerate() {
            acc.add(n as f64 * p);
        }
        acc.value()
    }

    /// `Σ_{n=lo}^{hi} P(n)`; mass in the tail never counts as inside.
    pub fn window_mass(&self, lo: usize, hi: usize) -> f64 {
        if hi < lo || lo > self.n_max() {
            return 0.0;
        }
        let hi = hi.min(self.n_max());
        let mut acc = CompensatedSum::default();
        self.probs[lo..=hi].iter().for_each(|&p| acc.add(p));
        acc.value()
    }
}

/// Default truncation point for a Poisson distribution of mean `mu`.
pub fn auto_n_max(mu: f64) -> usize {
    (mu + 12.0 * mu.sqrt() + 20.0).ceil() as usize
}

/// Poisson(μ) photon-number distribution. With `n_max = None` the truncation
/// point is chosen automatically; either way the tail beyond it must fall
/// below [`POISSON_TAIL_TOLERANCE`].
pub fn poisson_pnd(
    mu: f64,
    n_max: Option<usize>,
) -> Result<PhotonNumberDistribution, PhotonStatsError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(PhotonStatsError::NonPositiveMean(mu));
    }
    let n_max = n_max.unwrap_or_else(|| auto_n_max(mu));
    let probs: Vec<f64> = (0..=n_max).map(|n| poisson_pmf(n as f64, mu)).collect();

    let (_, band_hi) = poisson_support_band(mu);
    let mut tail = CompensatedSum::default();
    for n in (n_max as u64 + 1)..=band_hi.max(n_max as u64) {
        tail.add(poisson_pmf(n as f64, mu));
    }
    let tail = tail.value();
    if tail >= POISSON_TAIL_TOLERANCE {
        return Err(PhotonStatsError::TailTooLarge { n_max, tail });
    }
    // Summation error may leave the represented mass a few ulps away from
    // 1 - tail; absorb it into the tail when that keeps the tail >= 0.
    let mut represented = CompensatedSum::default();
    probs.iter().for_each(|&p| represented.add(p));
    let tail_mass = (1.0 - represented.value()).max(tail).max(0.0);
    PhotonNumberDistribution::new(probs, tail_mass)
}

/// Bernoulli transform: each photon independently survives with
/// probability `t`,
/// `out[m] = Σ_{n ≥ m} p[n] C(n, m) t^m (1-t)^(n-m)`.
///
/// The input tail passes through unchanged as output tail, since photons
/// from `n > n_max` may land anywhere.
pub fn bernoulli_transform(
    p: &PhotonNumberDistribution,
    t: f64,
) -> Result<PhotonNumberDistribution, PhotonStatsError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(PhotonStatsError::TransmittanceOutOfRange(t));
    }
    if t == 1.0 {
        return Ok(p.clone());
    }
    let n_max = p.n_max();
    let mut out = vec![0.0; n_max + 1];
    if t == 0.0 {
        let mut acc = CompensatedSum::default();
        p.probs.iter().for_each(|&x| acc.add(x));
        out[0] = acc.value();
        return Ok(PhotonNumberDistribution {
            probs: out,
            tail_mass: p.tail_mass,
        });
    }
    for (m, slot) in out.iter_mut().enumerate() {
        let mut acc = CompensatedSum::default();
        for n in m..=n_max {
            let pn = p.probs[n];
            if pn == 0.0 {
                continue;
            }
            acc.add(pn * ln_binomial_pmf(m as f64, n as f64, t).exp());
        }
        *slot = acc.value();
    }
    Ok(PhotonNumberDistribution {
        probs: out,
        tail_mass: p.tail_mass,
    })
}

/// `P(n > 1)`. Tail mass counts as multiphoton.
pub fn multiphoton_probability(p: &PhotonNumberDistribution) -> f64 {
    let mut acc = CompensatedSum::default();
    p.probs.iter().skip(2).for_each(|&x| acc.add(x));
    acc.add(p.tail_mass);
    acc.value().clamp(0.0, 1.0)
}

/// Beam splitter, monitor detector and attenuator of the passive scheme.
///
/// Photons from the untrusted source reach the monitor (P4) with
/// transmittance `ξ = t_B t_D` and leave Alice (P2) with `η = λ (1 - t_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassiveScheme {
    /// beam-splitter transmittance toward the monitor
    pub t_b: f64,
    /// monitor detector efficiency
    pub t_d: f64,
    /// attenuator transmittance
    pub lambda: f64,
    /// source mean photon number at P1
    pub mu: f64,
}

impl PassiveScheme {
    pub fn new(t_b: f64, t_d: f64, lambda: f64, mu: f64) -> Result<Self, PhotonStatsError> {
        let scheme = Self {
            t_b,
            t_d,
            lambda,
            mu,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// Scheme whose attenuator is set so that the outgoing transmittance is `eta`.
    pub fn with_eta(t_b: f64, t_d: f64, eta: f64, mu: f64) -> Result<Self, PhotonStatsError> {
        Self::new(t_b, t_d, eta / (1.0 - t_b), mu)
    }

    pub fn validate(&self) -> Result<(), PhotonStatsError> {
        let bad = |msg: String| Err(PhotonStatsError::InvalidScheme(msg));
        if !(self.t_b > 0.0 && self.t_b < 1.0) {
            return bad(format!("t_B = {} must lie in (0, 1)", self.t_b));
        }
        if !(self.t_d > 0.0 && self.t_d <= 1.0) {
            return bad(format!("t_D = {} must lie in (0, 1]", self.t_d));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda = {} must lie in (0, 1]", self.lambda));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be positive", self.mu));
        }
        Ok(())
    }

    /// Transmittance from the source to the monitor's ideal detector.
    pub fn xi(&self) -> f64 {
        self.t_b * self.t_d
    }

    /// Transmittance from the source to Alice's output.
    pub fn eta(&self) -> f64 {
        self.lambda * (1.0 - self.t_b)
    }

    /// Mean photon number leaving Alice, `η μ`.
    pub fn mu_out(&self) -> f64 {
        self.eta() * self.mu
    }

    /// Mean photoelectron number at the monitor, `ξ μ`.
    pub fn mean_monitor_count(&self) -> f64 {
        self.xi() * self.mu
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }
}
