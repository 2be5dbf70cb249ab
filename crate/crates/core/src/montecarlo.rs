//! Monte Carlo of the two-threshold photon-number analyzer.
//!
//! Each trial draws a source photon number, thins it to the monitor with
//! transmittance `ξ`, adds detection noise and checks the comparator window.
//! Trials are processed in fixed-size chunks; chunk `c` draws from ChaCha8
//! stream `c` under the run seed, so the result does not depend on how many
//! threads share the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{clopper_pearson, ConfidenceError};
use crate::noise_bounds::{
    untagged_lower_bound, NoiseError, NoiseModel, ThresholdWindow, UntaggedBound,
};
use crate::photon_stats::{
    bernoulli_transform, PassiveScheme, PhotonNumberDistribution, PhotonStatsError,
};
use crate::special::poisson_window_mass;

/// Trials per RNG stream.
pub const CHUNK_TRIALS: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    PhotonStats(#[from] PhotonStatsError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
}

/// Photon-number statistics of the untrusted source at its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSpec {
    Poisson {
        mu: f64,
    },
    /// any distribution; pulses drawn from the tail mass carry `n_max + 1`
    /// photons
    Explicit {
        pnd: PhotonNumberDistribution,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WindowSpec {
    Fixed {
        m1: u64,
        m2: u64,
    },
    /// `[⌊min m'⌋, ⌈max m'⌉]` over the run itself
    AutoMinmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: u64,
    pub source: SourceSpec,
    pub scheme: PassiveScheme,
    pub noise: NoiseModel,
    pub window: WindowSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trials: u64,
    /// trials with `m1 ≤ m' ≤ m2`
    pub k_prime: u64,
    pub observed_min: f64,
    pub observed_max: f64,
    pub effective_window: ThresholdWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub run: RunResult,
    /// Clopper-Pearson lower bound on the acceptance probability
    pub p_lower: f64,
    pub untagged: UntaggedBound,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), MonteCarloError> {
        if self.trials == 0 {
            return Err(MonteCarloError::InvalidConfig(
                "trials must be at least 1".into(),
            ));
        }
        self.scheme.validate()?;
        self.noise.validate()?;
        if let SourceSpec::Poisson { mu } = self.source {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(MonteCarloError::InvalidConfig(format!(
                    "source mean {mu} must be positive"
                )));
            }
        }
        if let WindowSpec::Fixed { m1, m2 } = self.window {
            ThresholdWindow::new(m1, m2)?;
        }
        Ok(())
    }

    /// Mean photoelectron count at the monitor, `ξ ⟨n⟩`.
    pub fn monitor_mean(&self) -> f64 {
        let xi = self.scheme.xi();
        match &self.source {
            SourceSpec::Poisson { mu } => mu * xi,
            SourceSpec::Explicit { pnd } => pnd.mean() * xi,
        }
    }

    /// Exact `Σ_{m1}^{m2} D(m)` of the noiseless monitor count.
    pub fn true_window_mass(&self, w: ThresholdWindow) -> Result<f64, MonteCarloError> {
        match &self.source {
            SourceSpec::Poisson { mu } => {
                Ok(poisson_window_mass(w.m1, w.m2, mu * self.scheme.xi()))
            }
            SourceSpec::Explicit { pnd } => {
                let d = bernoulli_transform(pnd, self.scheme.xi())?;
                let (lo, hi) = (w.m1 as usize, w.m2.min(usize::MAX as u64) as usize);
                Ok(d.window_mass(lo, hi))
            }
        }
    }
}

enum SourceSampler {
    Poisson(Poisson<f64>),
    Explicit { cdf: Vec<f64>, xi: f64 },
}

enum NoiseSampler {
    None,
    Poisson(Poisson<f64>),
    Gaussian(Normal<f64>),
}

struct Sampler {
    source: SourceSampler,
    noise: NoiseSampler,
}

impl Sampler {
    fn new(config: &RunConfig) -> Result<Self, MonteCarloError> {
        let bad = |e: String| MonteCarloError::InvalidConfig(e);
        let xi = config.scheme.xi();
        let source = match &config.source {
            // thinning a Poisson source gives a Poisson monitor count
            SourceSpec::Poisson { mu } => {
                SourceSampler::Poisson(Poisson::new(mu * xi).map_err(|e| bad(e.to_string()))?)
            }
            SourceSpec::Explicit { pnd } => {
                let mut acc = 0.0;
                let cdf = pnd
                    .probs()
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                SourceSampler::Explicit { cdf, xi }
            }
        };
        let noise = match config.noise {
            NoiseModel::None => NoiseSampler::None,
            NoiseModel::Poisson { gamma } => {
                NoiseSampler::Poisson(Poisson::new(gamma).map_err(|e| bad(e.to_string()))?)
            }
            NoiseModel::Gaussian { sigma2 } => NoiseSampler::Gaussian(
                Normal::new(0.0, sigma2.sqrt()).map_err(|e| bad(e.to_string()))?,
            ),
        };
        Ok(Self { source, noise })
    }

    fn measured(&self, rng: &mut ChaCha8Rng) -> f64 {
        let m = match &self.source {
            SourceSampler::Poisson(d) => d.sample(rng),
            SourceSampler::Explicit { cdf, xi } => {
                let u: f64 = rng.random();
                let n1 = cdf.partition_point(|&c| c <= u) as u64;
                if *xi >= 1.0 {
                    n1 as f64
                } else {
                    // n1 ≥ 0 and ξ ∈ (0, 1) are always accepted
                    Binomial::new(n1, *xi).expect("valid binomial").sample(rng) as f64
                }
            }
        };
        match &self.noise {
            NoiseSampler::None => m,
            NoiseSampler::Poisson(d) => m + d.sample(rng),
            NoiseSampler::Gaussian(d) => m + d.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    count: u64,
    min: f64,
    max: f64,
}

impl Tally {
    const EMPTY: Tally = Tally {
        count: 0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };

    fn merge(self, other: Tally) -> Tally {
        Tally {
            count: self.count + other.count,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }
}

fn tally(config: &RunConfig, sampler: &Sampler, window: Option<ThresholdWindow>) -> Tally {
    let chunks = config.trials.div_ceil(CHUNK_TRIALS);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c);
            let n = CHUNK_TRIALS.min(config.trials - c * CHUNK_TRIALS);
            let mut t = Tally::EMPTY;
            for _ in 0..n {
                let m = sampler.measured(&mut rng);
                t.min = t.min.min(m);
                t.max = t.max.max(m);
                if window.is_some_and(|w| w.contains(m)) {
                    t.count += 1;
                }
            }
            t
        })
        .reduce(|| Tally::EMPTY, Tally::merge)
}

/// Simulate the analyzer and count trials inside the window.
pub fn run(config: &RunConfig) -> Result<RunResult, MonteCarloError> {
    config.validate()?;
    let sampler = Sampler::new(config)?;
    match config.window {
        WindowSpec::Fixed { m1, m2 } => {
            let w = ThresholdWindow::new(m1, m2)?;
            let t = tally(config, &sampler, Some(w));
            Ok(RunResult {
                trials: config.trials,
                k_prime: t.count,
                observed_min: t.min,
                observed_max: t.max,
                effective_window: w,
            })
        }
        WindowSpec::AutoMinmax => {
            let t = tally(config, &sampler, None);
            let m1 = t.min.floor().max(0.0) as u64;
            let m2 = (t.max.ceil().max(0.0) as u64).max(m1 + 1);
            let w = ThresholdWindow::new(m1, m2)?;
            // every m' lies in the window unless Gaussian noise pushed some
            // below zero, where the window is cut at m1 = 0
            let k_prime = if t.min >= 0.0 {
                config.trials
            } else {
                tally(config, &sampler, Some(w)).count
            };
            Ok(RunResult {
                trials: config.trials,
                k_prime,
                observed_min: t.min,
                observed_max: t.max,
                effective_window: w,
            })
        }
    }
}

/// Power-meter readings of the monitor. Each record averages the
/// photoelectron count over `window_pulses` pulses of a Poisson source with
/// monitor mean `mean_count`.
pub fn power_meter_records(
    mean_count: f64,
    records: usize,
    window_pulses: u64,
    seed: u64,
) -> Result<Vec<f64>, MonteCarloError> {
    if window_pulses == 0 || !(mean_count > 0.0 && mean_count.is_finite()) {
        return Err(MonteCarloError::InvalidConfig(format!(
            "power meter needs a positive mean and window, got mean {mean_count}, window {window_pulses}"
        )));
    }
    let total = window_pulses as f64;
    // the summed count over a window is itself Poisson
    let dist = Poisson::new(mean_count * total)
        .map_err(|e| MonteCarloError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..records)
        .map(|_| dist.sample(&mut rng) / total)
        .collect())
}

/// [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &RunConfig, threads: usize) -> Result<RunResult, MonteCarloError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| MonteCarloError::ThreadPool(e.to_string()))?;
    pool.install(|| run(config))
}

/// Run, bound the acceptance probability, and turn it into a bound on the
/// untagged fraction for the configured noise.
pub fn run_pipeline(config: &RunConfig, alpha: f64) -> Result<PipelineResult, MonteCarloError> {
    let run = run(config)?;
    let ci = clopper_pearson(run.k_prime, run.trials, alpha)?;
    let untagged = untagged_lower_bound(ci.lower, run.effective_window, &config.noise);
    Ok(PipelineResult {
        run,
        p_lower: ci.lower,
        untagged,
    })
}
