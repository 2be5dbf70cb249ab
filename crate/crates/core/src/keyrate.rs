//! Channel model, GLLP key rates and the decoy-state estimates.
//!
//! Every rate here is in secure bits per pulse, with the basis-sifting
//! factor ½ of BB84 included and negative brackets floored to 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise_bounds::ThresholdWindow;
use crate::photon_stats::{PassiveScheme, PhotonStatsError};
use crate::worstcase::{maximize_ratio, multi_photon_coefficient, WorstCaseError};

/// Tolerance for the balanced splitter case `t_B t_D = 1 - t_B`.
pub const CASE_I_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("binary entropy argument {0} lies outside [0, 1]")]
    EntropyDomain(f64),
    #[error("detection gain is zero, so the QBER is undefined")]
    ZeroGain,
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid decoy settings: {0}")]
    InvalidDecoy(String),
    #[error("lambda_A = {lambda_a} exceeds 1: attenuator lambda = {lambda} is too large for this splitter")]
    LambdaAAboveOne { lambda_a: f64, lambda: f64 },
    #[error("untagged fraction {0} must lie in [0, 1]")]
    UntaggedFraction(f64),
    #[error(transparent)]
    Scheme(#[from] PhotonStatsError),
    #[error(transparent)]
    WorstCase(#[from] WorstCaseError),
}

/// Bob's side and the fiber between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bob's detection efficiency
    pub eta_b: f64,
    /// fiber loss in dB/km
    pub alpha_prime: f64,
    /// dark-count probability per gate
    pub y0: f64,
    /// probability that a signal photon hits the wrong detector
    pub e_det: f64,
    /// error probability of a dark count
    pub e0: f64,
    /// fiber length in km
    pub l_km: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), KeyRateError> {
        let bad = |m: String| Err(KeyRateError::InvalidChannel(m));
        if !(self.eta_b > 0.0 && self.eta_b <= 1.0) {
            return bad(format!("eta_B = {} must lie in (0, 1]", self.eta_b));
        }
        if !(self.alpha_prime > 0.0 && self.alpha_prime.is_finite()) {
            return bad(format!("alpha' = {} must be positive", self.alpha_prime));
        }
        if !(0.0..1.0).contains(&self.y0) {
            return bad(format!("Y0 = {} must lie in [0, 1)", self.y0));
        }
        if !(0.0..0.5).contains(&self.e_det) {
            return bad(format!("e_det = {} must lie in [0, 0.5)", self.e_det));
        }
        if !(0.0..=1.0).contains(&self.e0) {
            return bad(format!("e0 = {} must lie in [0, 1]", self.e0));
        }
        if !(self.l_km >= 0.0 && self.l_km.is_finite()) {
            return bad(format!("L = {} km must be non-negative", self.l_km));
        }
        Ok(())
    }

    /// `η_f = 10^(-α' L / 10)`.
    pub fn fiber_transmittance(&self) -> f64 {
        10f64.powf(-self.alpha_prime * self.l_km / 10.0)
    }

    pub fn at(&self, l_km: f64) -> Self {
        Self { l_km, ..*self }
    }
}

/// One point of a distance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub l_km: f64,
    pub rate: f64,
    /// bound on the tagged fraction of detections; for decoy rates, the
    /// fraction of signal detections not credited to single photons
    pub delta_bar: f64,
    pub q: f64,
    pub e: f64,
    /// why the rate was forced to 0, when it was
    pub diagnostic: Option<String>,
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (-x).ln_1p() / std::f64::consts::LN_2
}

/// `H2(x) = -x log2 x - (1-x) log2(1-x)`.
pub fn binary_entropy(x: f64) -> Result<f64, KeyRateError> {
    if (0.0..=1.0).contains(&x) {
        Ok(h2(x))
    } else {
        Err(KeyRateError::EntropyDomain(x))
    }
}

/// Probability of two or more photons in a Poisson(x) pulse.
pub fn poisson_multiphoton(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 0.5 {
        // e^{-x} Σ_{j≥2} x^j/j!, free of the cancellation in 1-(1+x)e^{-x}
        let mut term = 0.5 * x * x;
        let mut sum = term;
        let mut j = 2.0;
        loop {
            j += 1.0;
            term *= x / j;
            let next = sum + term;
            if next == sum {
                break;
            }
            sum = next;
        }
        sum * (-x).exp()
    } else {
        -(-x).exp_m1() - x * (-x).exp()
    }
}

/// Gain and QBER at Bob for a Poisson pulse of mean `mu_p2` leaving Alice:
/// `Q = Y0 + 1 - e^{-μ η_B η_f}`, `E = [e0 Y0 + e_det (1 - e^{-μ η_B η_f})] / Q`.
pub fn channel_gain_qber(mu_p2: f64, ch: &ChannelParams) -> Result<(f64, f64), KeyRateError> {
    let detected = -(-mu_p2 * ch.eta_b * ch.fiber_transmittance()).exp_m1();
    let q = ch.y0 + detected;
    if q <= 0.0 {
        return Err(KeyRateError::ZeroGain);
    }
    let e = (ch.e0 * ch.y0 + ch.e_det * detected) / q;
    Ok((q, e))
}

/// GLLP rate `½ Q {-f H2(E) + (1-Δ̄)[1 - H2(E/(1-Δ̄))]}`, floored at 0.
///
/// `Δ̄ ≥ 1` means Eve may own every detection and gives 0. When
/// `E/(1-Δ̄) > ½` the untagged bits are treated as carrying no key.
pub fn gllp_rate(q: f64, e: f64, delta_bar: f64, f_ec: f64) -> f64 {
    if delta_bar >= 1.0 {
        return 0.0;
    }
    let untagged = 1.0 - delta_bar;
    let e_untagged = e / untagged;
    let privacy = if e_untagged > 0.5 {
        0.0
    } else {
        untagged * (1.0 - h2(e_untagged))
    };
    (0.5 * q * (privacy - f_ec * h2(e))).max(0.0)
}

/// Tagged fraction with an APN monitor: Eve's worst-case multiphoton
/// probability at mean `mu_upper` over the gain.
pub fn apn_delta_bar(
    scheme: &PassiveScheme,
    ch: &ChannelParams,
    mu_upper: f64,
) -> Result<f64, KeyRateError> {
    let eta = scheme.eta();
    let worst = maximize_ratio(eta, mu_upper, None)?;
    let (q, _) = channel_gain_qber(eta * scheme.mu, ch)?;
    Ok(worst.p_multi_upper / q)
}

/// Tagged fraction for a known Poisson source: `P(n > 1) / Q`.
pub fn trusted_delta_bar(mu_p2: f64, ch: &ChannelParams) -> Result<f64, KeyRateError> {
    let (q, _) = channel_gain_qber(mu_p2, ch)?;
    Ok(poisson_multiphoton(mu_p2) / q)
}

/// Splitter regimes of the passive scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeCase {
    /// `t_B t_D = 1 - t_B`: monitor and output see the same photons
    I,
    /// `t_B t_D < 1 - t_B`, attenuator within `t_B t_D / (1 - t_B)`
    II,
    /// `t_B t_D > 1 - t_B`
    III,
}

/// Effective transmittance `λ^A = (1-t_B) λ / (t_B t_D)` from the monitor
/// reference position to Alice's output.
pub fn lambda_a(scheme: &PassiveScheme) -> Result<(f64, SchemeCase), KeyRateError> {
    scheme.validate()?;
    let xi = scheme.xi();
    let leak = 1.0 - scheme.t_b;
    if (xi - leak).abs() < CASE_I_TOLERANCE {
        return Ok((scheme.lambda, SchemeCase::I));
    }
    let la = leak * scheme.lambda / xi;
    if la > 1.0 {
        return Err(KeyRateError::LambdaAAboveOne {
            lambda_a: la,
            lambda: scheme.lambda,
        });
    }
    let case = if xi > leak {
        SchemeCase::III
    } else {
        SchemeCase::II
    };
    Ok((la, case))
}

fn rate_point(l_km: f64, q: f64, e: f64, delta_bar: f64, f_ec: f64) -> RatePoint {
    let rate = gllp_rate(q, e, delta_bar, f_ec);
    let diagnostic = if delta_bar >= 1.0 {
        Some("tagged fraction reaches 1".to_string())
    } else {
        None
    };
    RatePoint {
        l_km,
        rate,
        delta_bar,
        q,
        e,
        diagnostic,
    }
}

/// BB84 with an APN monitor whose mean estimate is `mu_upper`.
pub fn apn_rate_bb84(
    scheme: &PassiveScheme,
    ch: &ChannelParams,
    mu_upper: f64,
    f_ec: f64,
) -> Result<RatePoint, KeyRateError> {
    let (q, e) = channel_gain_qber(scheme.mu_out(), ch)?;
    let delta_bar = apn_delta_bar(scheme, ch, mu_upper)?;
    Ok(rate_point(ch.l_km, q, e, delta_bar, f_ec))
}

/// BB84 with a trusted Poisson source.
pub fn trusted_rate_bb84(
    scheme: &PassiveScheme,
    ch: &ChannelParams,
    f_ec: f64,
) -> Result<RatePoint, KeyRateError> {
    let mu_p2 = scheme.mu_out();
    let (q, e) = channel_gain_qber(mu_p2, ch)?;
    let delta_bar = poisson_multiphoton(mu_p2) / q;
    Ok(rate_point(ch.l_km, q, e, delta_bar, f_ec))
}

/// BB84 with a photon-number analyzer: a fraction `1 - δ` of pulses is known
/// to hold between `m1` and `m2` photons at the monitor reference.
///
/// Tagged pulses are counted as wholly insecure. An untagged pulse with `n`
/// reference photons leaves Alice as Binomial(n, λ^A), so its multiphoton
/// probability is at most that at `n = m2`.
pub fn pna_rate_bb84(
    scheme: &PassiveScheme,
    ch: &ChannelParams,
    w: ThresholdWindow,
    one_minus_delta: f64,
    f_ec: f64,
) -> Result<RatePoint, KeyRateError> {
    if !(0.0..=1.0).contains(&one_minus_delta) {
        return Err(KeyRateError::UntaggedFraction(one_minus_delta));
    }
    let (la, _) = lambda_a(scheme)?;
    let (q, e) = channel_gain_qber(scheme.mu_out(), ch)?;
    let multi_top = multi_photon_coefficient(w.m2, la);
    debug_assert!(multi_top >= multi_photon_coefficient(w.m1, la));
    let delta = 1.0 - one_minus_delta;
    let delta_bar = (delta + one_minus_delta * multi_top) / q;
    Ok(rate_point(ch.l_km, q, e, delta_bar, f_ec))
}

/// Signal and weak-decoy intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoySettings {
    /// signal mean photon number at Alice's output
    pub nu_s: f64,
    /// weak decoy mean photon number at Alice's output
    pub nu_d: f64,
    /// attenuator transmittance for the signal
    pub lambda_s: f64,
    /// attenuator transmittance for the decoy
    pub lambda_d: f64,
    /// error-correction inefficiency `f(E)`
    pub f_ec: f64,
}

impl DecoySettings {
    /// Attenuator settings that give means `nu_s`, `nu_d` at the output of
    /// `scheme`.
    pub fn for_scheme(scheme: &PassiveScheme, nu_s: f64, nu_d: f64, f_ec: f64) -> Self {
        let per_lambda = scheme.mu * (1.0 - scheme.t_b);
        Self {
            nu_s,
            nu_d,
            lambda_s: nu_s / per_lambda,
            lambda_d: nu_d / per_lambda,
            f_ec,
        }
    }

    pub fn validate(&self, scheme: &PassiveScheme) -> Result<(), KeyRateError> {
        let bad = |m: String| Err(KeyRateError::InvalidDecoy(m));
        if !(self.nu_d > 0.0 && self.nu_d < self.nu_s) {
            return bad(format!(
                "need 0 < nu_d < nu_s, got nu_d = {}, nu_s = {}",
                self.nu_d, self.nu_s
            ));
        }
        if !(self.lambda_d > 0.0 && self.lambda_d < self.lambda_s) {
            return bad(format!(
                "need 0 < lambda_d < lambda_s, got lambda_d = {}, lambda_s = {}",
                self.lambda_d, self.lambda_s
            ));
        }
        let limit = scheme.xi() / (1.0 - scheme.t_b);
        if self.lambda_s > limit {
            return bad(format!(
                "lambda_s = {} exceeds t_B t_D / (1 - t_B) = {limit}",
                self.lambda_s
            ));
        }
        if self.f_ec < 1.0 {
            return bad(format!("f_ec = {} must be at least 1", self.f_ec));
        }
        Ok(())
    }
}

fn decoy_point(
    l_km: f64,
    q_s: f64,
    e_s: f64,
    rate: f64,
    q1: f64,
    diagnostic: Option<String>,
) -> RatePoint {
    RatePoint {
        l_km,
        rate,
        delta_bar: (1.0 - q1 / q_s).clamp(0.0, 1.0),
        q: q_s,
        e: e_s,
        diagnostic,
    }
}

fn decoy_key(q_s: f64, e_s: f64, q1: f64, e1: f64, f_ec: f64) -> f64 {
    (0.5 * (q1 * (1.0 - h2(e1.min(0.5))) - q_s * f_ec * h2(e_s))).max(0.0)
}

/// Vacuum + weak decoy estimate for a trusted Poisson source.
pub fn trusted_decoy_rate(
    ch: &ChannelParams,
    settings: &DecoySettings,
) -> Result<RatePoint, KeyRateError> {
    let (s, d) = (settings.nu_s, settings.nu_d);
    let (q_s, e_s) = channel_gain_qber(s, ch)?;
    let (q_d, e_d) = channel_gain_qber(d, ch)?;
    let y1 = s / (s * d - d * d)
        * (q_d * d.exp() - q_s * s.exp() * d * d / (s * s) - (s * s - d * d) / (s * s) * ch.y0);
    if y1 <= 0.0 {
        return Ok(decoy_point(
            ch.l_km,
            q_s,
            e_s,
            0.0,
            0.0,
            Some("single-photon yield bound is not positive".into()),
        ));
    }
    let e1 = (e_d * q_d * d.exp() - ch.e0 * ch.y0) / (y1 * d);
    let q1 = y1 * s * (-s).exp();
    let rate = decoy_key(q_s, e_s, q1, e1, settings.f_ec);
    Ok(decoy_point(ch.l_km, q_s, e_s, rate, q1, None))
}

/// `P(Binomial(n, p) = k)` for `k ∈ {0, 1}`, in log space.
fn bin01(k: u64, n: u64, p: f64) -> f64 {
    let nf = n as f64;
    let l = (-p).ln_1p();
    match k {
        0 => (nf * l).exp(),
        _ => (nf.ln() + p.ln() + (nf - 1.0) * l).exp(),
    }
}

/// Extremes of `P(Binomial(n, p) = 1)` over `n ∈ [m1, m2]`. The pmf is
/// unimodal in `n` with its peak near `1/p`, so the minimum sits at an end
/// and the maximum at an end or the peak.
fn single_photon_range(w: ThresholdWindow, p: f64) -> (f64, f64) {
    let ends = [bin01(1, w.m1, p), bin01(1, w.m2, p)];
    let peak = ((1.0 - p) / p).floor().clamp(w.m1 as f64, w.m2 as f64) as u64;
    let inner = [bin01(1, peak, p), bin01(1, (peak + 1).min(w.m2), p)];
    let min = ends[0].min(ends[1]);
    let max = ends.iter().chain(&inner).fold(0.0f64, |a, &b| a.max(b));
    (min, max)
}

/// Decoy-state rate counting only untagged pulses, for an untrusted source.
///
/// An untagged pulse holds `n ∈ [m1, m2]` photons at the monitor reference
/// and leaves Alice with `k ~ Binomial(n, λ^A_x)` photons for intensity `x`.
/// Eve may know `n` and `k` but not `x`, so the yields `Y_{n,k}` and errors
/// `e_{n,k}` are shared by both intensities. Tagged pulses contribute at
/// most `δ` to any gain. The vacuum yield is the dark-count rate `Y0`.
pub fn decoy_rate_untagged(
    scheme: &PassiveScheme,
    ch: &ChannelParams,
    settings: &DecoySettings,
    w: ThresholdWindow,
    one_minus_delta_s: f64,
    one_minus_delta_d: f64,
) -> Result<RatePoint, KeyRateError> {
    for omd in [one_minus_delta_s, one_minus_delta_d] {
        if !(0.0..=1.0).contains(&omd) {
            return Err(KeyRateError::UntaggedFraction(omd));
        }
    }
    settings.validate(scheme)?;
    let (ls, _) = lambda_a(&scheme.with_lambda(settings.lambda_s))?;
    let (ld, _) = lambda_a(&scheme.with_lambda(settings.lambda_d))?;
    let (q_s, e_s) = channel_gain_qber(settings.nu_s, ch)?;
    let (q_d, e_d) = channel_gain_qber(settings.nu_d, ch)?;
    let zero = |why: &str| {
        Ok(decoy_point(
            ch.l_km,
            q_s,
            e_s,
            0.0,
            0.0,
            Some(why.to_string()),
        ))
    };

    // both estimates bound the same source; take the larger tagged fraction
    let delta = 1.0 - one_minus_delta_s.min(one_minus_delta_d);

    // Bin_d(k;n)/Bin_s(k;n) = θ^n s^k with θ > 1 and s < 1, so for every
    // k ≥ 2 and n ≤ m2 it is at most c = θ^{m2} s². Subtracting c·Q_s from Q_d
    // leaves only non-positive multiphoton terms, which are dropped.
    let theta = (-ld).ln_1p() - (-ls).ln_1p();
    let ln_s = (ld / ls).ln() - theta;
    let c = (w.m2 as f64 * theta + 2.0 * ln_s).exp();

    // vacuum coefficient Bin_d(0;n) - c Bin_s(0;n) is largest at its
    // bound (1-λ_d)^{m1} - c(1-λ_s)^{m2}; a negative value is dropped
    let a0 = (bin01(0, w.m1, ld) - c * bin01(0, w.m2, ls)).max(0.0);

    // single-photon coefficient, at most max Bin_d(1) - c min Bin_s(1)
    let (bs_min, bs_max) = single_photon_range(w, ls);
    let (bd_min, bd_max) = single_photon_range(w, ld);
    let a1 = bd_max - c * bs_min;
    if a1 <= 0.0 {
        return zero("decoy single-photon coefficient is not positive");
    }

    // tagged decoy gain ≤ δ and tagged signal gain ≥ 0 push W down
    let w_lower = (q_d - delta - c * q_s - ch.y0 * a0) / a1;
    if w_lower <= 0.0 {
        return zero("single-photon yield bound is not positive");
    }
    let q1 = bs_min * w_lower;

    // decoy errors: drop tagged and multiphoton errors (≥ 0), keep the
    // least possible vacuum share
    let vacuum_errors =
        one_minus_delta_s.min(one_minus_delta_d) * bin01(0, w.m2, ld) * ch.e0 * ch.y0;
    let weighted_errors = (e_d * q_d - vacuum_errors).max(0.0) / bd_min;
    // signal single-photon error mass ≤ max Bin_s(1) × Σ D(n) e_{n1} Y_{n1}
    let e1 = bs_max * weighted_errors / q1;
    // q(1 - H2(err/q)) grows with q when err/q ≤ ½, so pairing the lower
    // gain with the upper error mass keeps the bound
    let rate = decoy_key(q_s, e_s, q1, e1, settings.f_ec);
    Ok(decoy_point(ch.l_km, q_s, e_s, rate, q1, None))
}

/// Largest `L ≤ l_max` with a positive rate, located on a `step` grid and
/// refined by bisection. `None` if the rate at 0 km is already 0.
pub fn max_secure_distance(
    rate_at: impl Fn(f64) -> Result<f64, KeyRateError>,
    l_max: f64,
    step: f64,
) -> Result<Option<f64>, KeyRateError> {
    if rate_at(0.0)? <= 0.0 {
        return Ok(None);
    }
    let mut good = 0.0;
    let mut bad = None;
    let mut l = step;
    while l <= l_max + 1e-9 {
        if rate_at(l)? > 0.0 {
            good = l;
        } else {
            bad = Some(l);
            break;
        }
        l += step;
    }
    let Some(mut bad) = bad else {
        return Ok(Some(good));
    };
    while bad - good > 1e-7 {
        let mid = 0.5 * (good + bad);
        if rate_at(mid)? > 0.0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(Some(good))
}

/// Evaluate `f` at every distance in parallel, keeping input order.
pub fn distance_sweep<F>(distances: &[f64], f: F) -> Result<Vec<RatePoint>, KeyRateError>
where
    F: Fn(f64) -> Result<RatePoint, KeyRateError> + Sync,
{
    distances.par_iter().map(|&l| f(l)).collect()
}

/// Grid `start, start+step, …` up to and including `end`.
pub fn distance_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    if step <= 0.0 || end <= start {
        return vec![start];
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}
