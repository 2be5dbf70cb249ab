//! Executing a resolved scenario and writing its table.

use std::fmt::Write as _;

use passive_qkd::confidence::apn_interval;
use passive_qkd::keyrate::{
    apn_rate_bb84, decoy_rate_untagged, distance_grid, distance_sweep, pna_rate_bb84,
    trusted_decoy_rate, trusted_rate_bb84, KeyRateError, RatePoint,
};
use passive_qkd::montecarlo::{
    power_meter_records, run_pipeline, RunConfig, SourceSpec, WindowSpec,
};
use passive_qkd::noise_bounds::{NoiseModel, ThresholdWindow};
use passive_qkd::photon_stats::PassiveScheme;
use passive_qkd::special::poisson_window_mass;

use crate::scenario::{Curve, Mode, Resolved};

/// Distance resolution of the refined maximum secure distance, in km.
const DISTANCE_TOLERANCE: f64 = 1e-6;

/// What the monitor established about the untagged fraction.
#[derive(Debug, Clone)]
pub struct Untagged {
    pub window: ThresholdWindow,
    /// lower bound on `1 - δ` per intensity (signal, then decoy if any)
    pub bounds: Vec<f64>,
    pub degenerate: bool,
    /// Monte Carlo details, absent for the exact noiseless evaluation
    pub trials: Option<McDetails>,
}

#[derive(Debug, Clone)]
pub struct McDetails {
    pub trials: u64,
    pub k_prime: u64,
    pub p_lower: f64,
    pub true_mass: f64,
}

impl Untagged {
    pub fn value(&self) -> f64 {
        self.bounds.iter().copied().fold(1.0, f64::min)
    }
}

#[derive(Debug, Clone)]
pub enum Reach {
    /// no key even at the first swept distance
    None,
    /// rate drops to zero inside the sweep, refined between grid points
    Within(f64),
    /// still positive at the end of the sweep
    AtLeast(f64),
}

#[derive(Debug, Clone)]
pub struct CurveOutput {
    pub curve: Curve,
    pub points: Vec<RatePoint>,
    pub untagged: Option<Untagged>,
    pub mu_upper: Option<f64>,
    pub reach: Option<Reach>,
    pub snr: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("curve {label}: {source}")]
    KeyRate { label: String, source: KeyRateError },
    #[error("curve {label}: {message}")]
    Other { label: String, message: String },
}

pub fn run(resolved: &Resolved) -> Result<Vec<CurveOutput>, RunError> {
    resolved
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            run_curve(
                resolved,
                c,
                resolved.scenario.seed.wrapping_add(2 * i as u64),
            )
        })
        .collect()
}

fn base_scheme(resolved: &Resolved, l_km: f64) -> Result<PassiveScheme, String> {
    let s = &resolved.scenario;
    s.scheme.at(&s.channel, l_km)
}

fn run_curve(resolved: &Resolved, curve: &Curve, seed: u64) -> Result<CurveOutput, RunError> {
    let s = &resolved.scenario;
    let other = |message: String| RunError::Other {
        label: curve.label.clone(),
        message,
    };
    let key = |source: KeyRateError| RunError::KeyRate {
        label: curve.label.clone(),
        source,
    };
    // the monitor sits before the attenuator, so its statistics do not
    // depend on λ or on the distance
    let base = base_scheme(resolved, 0.0).map_err(other)?;
    let ch = s.channel.params();
    let f_ec = s.channel.f_ec;

    let untagged = if matches!(
        curve.mode,
        Mode::PnaBb84 | Mode::PnaDecoy | Mode::McPipeline
    ) {
        let lambdas = match (curve.mode, &resolved.decoy) {
            (Mode::PnaDecoy, Some(d)) => vec![d.lambda_s, d.lambda_d],
            _ => vec![base.lambda],
        };
        Some(untagged_fraction(resolved, curve, &base, &lambdas, seed).map_err(other)?)
    } else {
        None
    };

    let mu_upper = if curve.mode == Mode::ApnBb84 {
        Some(match &s.apn {
            Some(apn) => {
                let records = power_meter_records(
                    base.mean_monitor_count(),
                    apn.records as usize,
                    apn.window_pulses,
                    seed,
                )
                .map_err(|e| other(e.to_string()))?;
                apn_interval(&records, base.xi(), s.alpha)
                    .map_err(|e| other(e.to_string()))?
                    .mu_upper
            }
            None => base.mu,
        })
    } else {
        None
    };

    let snr = match curve.noise {
        NoiseModel::None => None,
        n => Some(n.snr(base.mean_monitor_count())),
    };

    if curve.mode == Mode::McPipeline {
        return Ok(CurveOutput {
            curve: curve.clone(),
            points: Vec::new(),
            untagged,
            mu_upper,
            reach: None,
            snr,
        });
    }

    let rate_at = |l: f64| -> Result<RatePoint, KeyRateError> {
        let ch = ch.at(l);
        let scheme = || base_scheme(resolved, l).map_err(KeyRateError::InvalidChannel);
        match curve.mode {
            Mode::ApnBb84 => apn_rate_bb84(&scheme()?, &ch, mu_upper.unwrap_or(base.mu), f_ec),
            Mode::TrustedBb84 => trusted_rate_bb84(&scheme()?, &ch, f_ec),
            Mode::PnaBb84 => {
                let u = untagged
                    .as_ref()
                    .expect("pna curves carry an untagged fraction");
                pna_rate_bb84(&scheme()?, &ch, u.window, u.value(), f_ec)
            }
            Mode::TrustedDecoy => trusted_decoy_rate(&ch, &decoy_settings(resolved, f_ec)),
            Mode::PnaDecoy => {
                let u = untagged
                    .as_ref()
                    .expect("pna curves carry an untagged fraction");
                decoy_rate_untagged(
                    &base,
                    &ch,
                    &decoy_settings(resolved, f_ec),
                    u.window,
                    u.bounds[0],
                    u.bounds[1],
                )
            }
            Mode::McPipeline => unreachable!(),
        }
    };

    let sweep = s.sweep.as_ref().expect("validated: sweep present");
    let grid = distance_grid(sweep.l_start, sweep.l_end, sweep.l_step);
    let points = distance_sweep(&grid, rate_at).map_err(key)?;
    let reach = reach(&points, |l| Ok(rate_at(l)?.rate)).map_err(key)?;

    Ok(CurveOutput {
        curve: curve.clone(),
        points,
        untagged,
        mu_upper,
        reach: Some(reach),
        snr,
    })
}

fn decoy_settings(resolved: &Resolved, f_ec: f64) -> passive_qkd::keyrate::DecoySettings {
    let d = resolved.decoy.expect("validated: decoy present");
    passive_qkd::keyrate::DecoySettings { f_ec, ..d }
}

/// Lower bounds on `1 - δ` for each attenuator setting. Without Monte Carlo
/// trials the window mass of the noiseless Poisson monitor is used as is.
fn untagged_fraction(
    resolved: &Resolved,
    curve: &Curve,
    base: &PassiveScheme,
    lambdas: &[f64],
    seed: u64,
) -> Result<Untagged, String> {
    let s = &resolved.scenario;
    let Some(mc) = &s.monte_carlo else {
        let Some(WindowSpec::Fixed { m1, m2 }) = curve.window else {
            return Err("an exact untagged fraction needs a fixed window".into());
        };
        let window = ThresholdWindow::new(m1, m2).map_err(|e| e.to_string())?;
        let mass = poisson_window_mass(m1, m2, base.mean_monitor_count());
        return Ok(Untagged {
            window,
            bounds: vec![mass; lambdas.len()],
            degenerate: false,
            trials: None,
        });
    };
    let window_spec = curve.window.expect("validated: window present");
    let mut bounds = Vec::new();
    let mut degenerate = false;
    let mut window: Option<ThresholdWindow> = None;
    let mut details = None;
    for (i, &lambda) in lambdas.iter().enumerate() {
        let config = RunConfig {
            trials: mc.trials,
            seed: seed.wrapping_add(i as u64),
            source: SourceSpec::Poisson { mu: base.mu },
            scheme: base.with_lambda(lambda),
            noise: curve.noise,
            window: window_spec,
        };
        let out = run_pipeline(&config, s.alpha).map_err(|e| e.to_string())?;
        bounds.push(out.untagged.value);
        degenerate |= out.untagged.degenerate;
        let w = out.run.effective_window;
        if details.is_none() {
            details = Some(McDetails {
                trials: out.run.trials,
                k_prime: out.run.k_prime,
                p_lower: out.p_lower,
                true_mass: config.true_window_mass(w).map_err(|e| e.to_string())?,
            });
        }
        // one window for every intensity: keep the widest
        window = Some(match window {
            None => w,
            Some(v) => {
                ThresholdWindow::new(v.m1.min(w.m1), v.m2.max(w.m2)).map_err(|e| e.to_string())?
            }
        });
    }
    Ok(Untagged {
        window: window.expect("at least one intensity"),
        bounds,
        degenerate,
        trials: details,
    })
}

/// Largest swept distance with a positive rate, refined by bisection when
/// the rate vanishes inside the sweep.
fn reach(
    points: &[RatePoint],
    rate_at: impl Fn(f64) -> Result<f64, KeyRateError>,
) -> Result<Reach, KeyRateError> {
    let Some(last) = points.iter().rposition(|p| p.rate > 0.0) else {
        return Ok(Reach::None);
    };
    let Some(next) = points.get(last + 1) else {
        return Ok(Reach::AtLeast(points[last].l_km));
    };
    let (mut good, mut bad) = (points[last].l_km, next.l_km);
    while bad - good > DISTANCE_TOLERANCE {
        let mid = 0.5 * (good + bad);
        if rate_at(mid)? > 0.0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(Reach::Within(good))
}

fn cell(x: f64) -> String {
    format!("{x:.9e}")
}

/// Tab-separated table with a `#` header holding the version and the
/// resolved configuration.
pub fn table(resolved: &Resolved, outputs: &[CurveOutput]) -> String {
    let mut out = String::new();
    let s = &resolved.scenario;
    let _ = writeln!(
        out,
        "# {} {}",
        env!("CARGO_BIN_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(out, "# scenario: {}", s.name);
    let _ = writeln!(out, "# resolved configuration:");
    let config = toml::to_string(s).unwrap_or_else(|e| format!("<unserializable: {e}>"));
    for line in config.lines().filter(|l| !l.trim().is_empty()) {
        let _ = writeln!(out, "#   {line}");
    }
    if let Some(d) = &resolved.decoy {
        let _ = writeln!(
            out,
            "#   resolved lambda_s = {:e}, lambda_d = {:e}",
            d.lambda_s, d.lambda_d
        );
    }
    for o in outputs {
        if let Some(u) = &o.untagged {
            let _ = writeln!(
                out,
                "# curve {}: window [{}, {}], untagged lower bound {}{}",
                o.curve.label,
                u.window.m1,
                u.window.m2,
                u.bounds
                    .iter()
                    .map(|b| format!("{b:.9}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                if u.degenerate { " (degenerate)" } else { "" }
            );
        }
        if let Some(mu) = o.mu_upper {
            let _ = writeln!(
                out,
                "# curve {}: APN upper bound mu_U = {mu:.9e}",
                o.curve.label
            );
        }
    }
    out.push_str("curve\tmode\tL_km\trate\tQ\tE\tdelta_bar\tuntagged_lower\tflags\n");
    for o in outputs {
        let untagged = o
            .untagged
            .as_ref()
            .map(|u| format!("{:.9}", u.value()))
            .unwrap_or_default();
        let mut flags: Vec<String> = Vec::new();
        if o.untagged.as_ref().is_some_and(|u| u.degenerate) {
            flags.push("degenerate-untagged-bound".into());
        }
        if o.points.is_empty() {
            let _ = writeln!(
                out,
                "{}\t{}\t\t\t\t\t\t{}\t{}",
                o.curve.label,
                o.curve.mode.name(),
                untagged,
                flags.join(",")
            );
        }
        for p in &o.points {
            let mut row_flags = flags.clone();
            if let Some(d) = &p.diagnostic {
                row_flags.push(d.replace(' ', "-"));
            }
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                o.curve.label,
                o.curve.mode.name(),
                p.l_km,
                cell(p.rate),
                cell(p.q),
                cell(p.e),
                cell(p.delta_bar),
                untagged,
                row_flags.join(",")
            );
        }
    }
    out
}

/// Human-readable digest: reach, SNR and monitor results per curve.
pub fn summary(resolved: &Resolved, outputs: &[CurveOutput]) -> String {
    let mut out = format!("scenario {}\n", resolved.scenario.name);
    for o in outputs {
        let label = &o.curve.label;
        match &o.reach {
            Some(Reach::None) => {
                let _ = writeln!(out, "{label}: no secure key at any swept distance");
            }
            Some(Reach::Within(l)) => {
                let _ = writeln!(out, "{label}: max secure distance {l:.3} km");
            }
            Some(Reach::AtLeast(l)) => {
                let _ = writeln!(
                    out,
                    "{label}: max secure distance at least {l:.3} km (end of sweep)"
                );
            }
            None => {}
        }
        if let Some(snr) = o.snr {
            let name = match o.curve.noise {
                NoiseModel::Poisson { .. } => "R_SN_p = <m>/gamma",
                _ => "R_SN_g = <m>/sigma^2",
            };
            let _ = writeln!(out, "{label}: {name} = {snr:.6e}");
        }
        if let Some(u) = &o.untagged {
            let _ = writeln!(
                out,
                "{label}: untagged lower bound {:.9} on window [{}, {}]{}",
                u.value(),
                u.window.m1,
                u.window.m2,
                if u.degenerate { " (degenerate)" } else { "" }
            );
            if let Some(d) = &u.trials {
                let _ = writeln!(
                    out,
                    "{label}: k' = {} of {} trials, p_l = {:.9}, true window mass {:.9}",
                    d.k_prime, d.trials, d.p_lower, d.true_mass
                );
            }
        }
        if let Some(mu) = o.mu_upper {
            let _ = writeln!(out, "{label}: APN upper bound mu_U = {mu:.6e}");
        }
    }
    out
}
