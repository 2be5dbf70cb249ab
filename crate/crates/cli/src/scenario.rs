//! Scenario files: schema checks, physics checks and the resolved form.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use passive_qkd::keyrate::{lambda_a, ChannelParams, DecoySettings};
use passive_qkd::montecarlo::WindowSpec;
use passive_qkd::noise_bounds::{NoiseModel, ThresholdWindow};
use passive_qkd::photon_stats::PassiveScheme;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const DEFAULT_ALPHA: f64 = 1e-6;

/// One offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl Issue {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid\t{}\t{}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ApnBb84,
    PnaBb84,
    TrustedBb84,
    PnaDecoy,
    TrustedDecoy,
    McPipeline,
}

const MODE_NAMES: [&str; 6] = [
    "apn-bb84",
    "pna-bb84",
    "trusted-bb84",
    "pna-decoy",
    "trusted-decoy",
    "mc-pipeline",
];

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::ApnBb84 => MODE_NAMES[0],
            Mode::PnaBb84 => MODE_NAMES[1],
            Mode::TrustedBb84 => MODE_NAMES[2],
            Mode::PnaDecoy => MODE_NAMES[3],
            Mode::TrustedDecoy => MODE_NAMES[4],
            Mode::McPipeline => MODE_NAMES[5],
        }
    }

    fn needs_window(self) -> bool {
        matches!(self, Mode::PnaBb84 | Mode::PnaDecoy | Mode::McPipeline)
    }

    fn needs_decoy(self) -> bool {
        matches!(self, Mode::PnaDecoy | Mode::TrustedDecoy)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub t_b: f64,
    pub t_d: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Pick `η = η_B η_f / μ` afresh at every distance.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub match_fiber: bool,
}

impl SchemeSection {
    /// The scheme at fiber length `l_km`. Only `match_fiber` depends on it.
    pub fn at(&self, ch: &ChannelSection, l_km: f64) -> Result<PassiveScheme, String> {
        let built = if self.match_fiber {
            let eta_f = ch.params().at(l_km).fiber_transmittance();
            PassiveScheme::with_eta(self.t_b, self.t_d, ch.eta_b * eta_f / self.mu, self.mu)
        } else if let Some(eta) = self.eta {
            PassiveScheme::with_eta(self.t_b, self.t_d, eta, self.mu)
        } else {
            PassiveScheme::new(self.t_b, self.t_d, self.lambda.unwrap_or(f64::NAN), self.mu)
        };
        built.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub eta_b: f64,
    pub alpha_prime: f64,
    pub y0: f64,
    pub e_det: f64,
    pub e0: f64,
    #[serde(default = "one")]
    pub f_ec: f64,
}

fn one() -> f64 {
    1.0
}

impl ChannelSection {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            eta_b: self.eta_b,
            alpha_prime: self.alpha_prime,
            y0: self.y0,
            e_det: self.e_det,
            e0: self.e0,
            l_km: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoySection {
    pub nu_s: f64,
    pub nu_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Poisson,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

impl NoiseSection {
    fn model(&self, field: &str, issues: &mut Vec<Issue>) -> NoiseModel {
        let (want, other, other_name) = match self.kind {
            NoiseKind::None => {
                for (v, name) in [(self.gamma, "gamma"), (self.sigma2, "sigma2")] {
                    if v.is_some() {
                        issues.push(Issue::new(
                            format!("{field}.{name}"),
                            "not allowed when kind = \"none\"",
                        ));
                    }
                }
                return NoiseModel::None;
            }
            NoiseKind::Poisson => (("gamma", self.gamma), self.sigma2, "sigma2"),
            NoiseKind::Gaussian => (("sigma2", self.sigma2), self.gamma, "gamma"),
        };
        if other.is_some() {
            issues.push(Issue::new(
                format!("{field}.{other_name}"),
                "combined Poisson and Gaussian noise is not supported",
            ));
        }
        let Some(v) = want.1 else {
            issues.push(Issue::new(
                format!("{field}.{}", want.0),
                "missing required key",
            ));
            return NoiseModel::None;
        };
        let model = match self.kind {
            NoiseKind::Poisson => NoiseModel::Poisson { gamma: v },
            _ => NoiseModel::Gaussian { sigma2: v },
        };
        if let Err(e) = model.validate() {
            issues.push(Issue::new(format!("{field}.{}", want.0), e.to_string()));
        }
        model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Fixed,
    AutoMinmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub kind: WindowKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<u64>,
}

impl WindowSection {
    fn spec(&self, field: &str, issues: &mut Vec<Issue>) -> Option<WindowSpec> {
        match self.kind {
            WindowKind::AutoMinmax => {
                for (v, name) in [(self.m1, "m1"), (self.m2, "m2")] {
                    if v.is_some() {
                        issues.push(Issue::new(
                            format!("{field}.{name}"),
                            "not allowed when kind = \"auto-minmax\"",
                        ));
                    }
                }
                Some(WindowSpec::AutoMinmax)
            }
            WindowKind::Fixed => {
                let mut missing = false;
                for (v, name) in [(self.m1, "m1"), (self.m2, "m2")] {
                    if v.is_none() {
                        issues.push(Issue::new(
                            format!("{field}.{name}"),
                            "missing required key",
                        ));
                        missing = true;
                    }
                }
                if missing {
                    return None;
                }
                match ThresholdWindow::new(self.m1.unwrap(), self.m2.unwrap()) {
                    Ok(w) => Some(WindowSpec::Fixed { m1: w.m1, m2: w.m2 }),
                    Err(e) => {
                        issues.push(Issue::new(field, e.to_string()));
                        None
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trials: u64,
}

/// Power-meter records feeding the APN interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApnSection {
    pub records: u64,
    pub window_pulses: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub l_start: f64,
    pub l_end: f64,
    pub l_step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub mode: Mode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub scheme: SchemeSection,
    pub channel: ChannelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoy: Option<DecoySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apn: Option<ApnSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, rename = "curve", skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveSection>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// One curve after defaults and overrides are applied.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub mode: Mode,
    pub noise: NoiseModel,
    pub window: Option<WindowSpec>,
}

/// A scenario that passed every check.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub curves: Vec<Curve>,
    pub decoy: Option<DecoySettings>,
}

#[derive(Clone, Copy)]
enum Kind {
    Float,
    Int,
    Str,
    Choice(&'static [&'static str]),
    Bool,
    Table(&'static [Field]),
    Tables(&'static [Field]),
}

#[derive(Clone, Copy)]
struct Field {
    key: &'static str,
    kind: Kind,
    required: bool,
}

const fn req(key: &'static str, kind: Kind) -> Field {
    Field {
        key,
        kind,
        required: true,
    }
}

const fn opt(key: &'static str, kind: Kind) -> Field {
    Field {
        key,
        kind,
        required: false,
    }
}

const SCHEME: &[Field] = &[
    req("t_b", Kind::Float),
    req("t_d", Kind::Float),
    req("mu", Kind::Float),
    opt("lambda", Kind::Float),
    opt("eta", Kind::Float),
    opt("match_fiber", Kind::Bool),
];
const CHANNEL: &[Field] = &[
    req("eta_b", Kind::Float),
    req("alpha_prime", Kind::Float),
    req("y0", Kind::Float),
    req("e_det", Kind::Float),
    req("e0", Kind::Float),
    opt("f_ec", Kind::Float),
];
const DECOY: &[Field] = &[
    req("nu_s", Kind::Float),
    req("nu_d", Kind::Float),
    opt("lambda_s", Kind::Float),
    opt("lambda_d", Kind::Float),
];
const NOISE_KINDS: &[&str] = &["none", "poisson", "gaussian"];
const WINDOW_KINDS: &[&str] = &["fixed", "auto-minmax"];
const NOISE: &[Field] = &[
    req("kind", Kind::Choice(NOISE_KINDS)),
    opt("gamma", Kind::Float),
    opt("sigma2", Kind::Float),
];
const WINDOW: &[Field] = &[
    req("kind", Kind::Choice(WINDOW_KINDS)),
    opt("m1", Kind::Int),
    opt("m2", Kind::Int),
];
const MONTE_CARLO: &[Field] = &[req("trials", Kind::Int)];
const APN: &[Field] = &[req("records", Kind::Int), req("window_pulses", Kind::Int)];
const SWEEP: &[Field] = &[
    req("l_start", Kind::Float),
    req("l_end", Kind::Float),
    req("l_step", Kind::Float),
];
const CURVE: &[Field] = &[
    req("label", Kind::Str),
    opt("mode", Kind::Choice(&MODE_NAMES)),
    opt("noise", Kind::Table(NOISE)),
    opt("window", Kind::Table(WINDOW)),
];
const TOP: &[Field] = &[
    req("name", Kind::Str),
    opt("description", Kind::Str),
    req("mode", Kind::Choice(&MODE_NAMES)),
    opt("alpha", Kind::Float),
    opt("seed", Kind::Int),
    opt("output", Kind::Str),
    req("scheme", Kind::Table(SCHEME)),
    req("channel", Kind::Table(CHANNEL)),
    opt("decoy", Kind::Table(DECOY)),
    opt("noise", Kind::Table(NOISE)),
    opt("window", Kind::Table(WINDOW)),
    opt("monte_carlo", Kind::Table(MONTE_CARLO)),
    opt("apn", Kind::Table(APN)),
    opt("sweep", Kind::Table(SWEEP)),
    opt("curve", Kind::Tables(CURVE)),
];

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Walk `table` against `fields`, collecting every problem. Integers in float
/// slots are widened in place so the typed pass accepts them.
fn check_table(path: &str, table: &mut Table, fields: &[Field], issues: &mut Vec<Issue>) {
    for (key, value) in table.iter_mut() {
        let here = join(path, key);
        let Some(field) = fields.iter().find(|f| f.key == key) else {
            issues.push(Issue::new(here, "unknown key"));
            continue;
        };
        let found = value.type_str();
        match (field.kind, &mut *value) {
            (Kind::Float, Value::Float(_)) => {}
            (Kind::Float, Value::Integer(i)) => {
                let f = *i as f64;
                *value = Value::Float(f);
            }
            (Kind::Int, Value::Integer(i)) if *i < 0 => {
                issues.push(Issue::new(here, "must be a non-negative integer"));
            }
            (Kind::Int, Value::Integer(_))
            | (Kind::Str, Value::String(_))
            | (Kind::Bool, Value::Boolean(_)) => {}
            (Kind::Choice(allowed), Value::String(s)) => {
                if !allowed.contains(&s.as_str()) {
                    issues.push(Issue::new(
                        here,
                        format!(
                            "unknown value \"{s}\", expected one of {}",
                            allowed.join(", ")
                        ),
                    ));
                }
            }
            (Kind::Table(sub), Value::Table(t)) => check_table(&here, t, sub, issues),
            (Kind::Tables(sub), Value::Array(items)) => {
                for (i, item) in items.iter_mut().enumerate() {
                    match item {
                        Value::Table(t) => check_table(&format!("{here}[{i}]"), t, sub, issues),
                        other => issues.push(Issue::new(
                            format!("{here}[{i}]"),
                            format!("expected table, found {}", other.type_str()),
                        )),
                    }
                }
            }
            (kind, _) => issues.push(Issue::new(
                here,
                format!(
                    "expected {}, found {found}",
                    match kind {
                        Kind::Float => "float",
                        Kind::Int => "integer",
                        Kind::Str | Kind::Choice(_) => "string",
                        Kind::Bool => "boolean",
                        Kind::Table(_) => "table",
                        Kind::Tables(_) => "array of tables",
                    }
                ),
            )),
        }
    }
    for field in fields.iter().filter(|f| f.required) {
        if !table.contains_key(field.key) {
            issues.push(Issue::new(join(path, field.key), "missing required key"));
        }
    }
}

/// Schema pass: parse `text` and type-check every key.
pub fn parse(text: &str) -> Result<Scenario, Vec<Issue>> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        vec![Issue::new("<file>", e.to_string().replace('\n', " "))]
    })?;
    let mut issues = Vec::new();
    check_table("", &mut table, TOP, &mut issues);
    if !issues.is_empty() {
        return Err(issues);
    }
    Scenario::deserialize(table)
        .map_err(|e| vec![Issue::new("<file>", e.to_string().replace('\n', " "))])
}

/// Physics and mode checks on a schema-valid scenario.
pub fn resolve(scenario: Scenario) -> Result<Resolved, Vec<Issue>> {
    let mut issues = Vec::new();
    let s = &scenario;

    if !(s.alpha > 0.0 && s.alpha < 1.0) {
        issues.push(Issue::new(
            "alpha",
            format!("{} must lie in (0, 1)", s.alpha),
        ));
    }

    let given = [
        s.scheme.lambda.is_some(),
        s.scheme.eta.is_some(),
        s.scheme.match_fiber,
    ];
    let scheme = if given.iter().filter(|&&g| g).count() != 1 {
        issues.push(Issue::new(
            "scheme",
            "give exactly one of lambda, eta, match_fiber = true",
        ));
        None
    } else {
        // λ is largest at L = 0 when it follows the fiber
        match s.scheme.at(&s.channel, 0.0) {
            Ok(p) => {
                if let Err(e) = lambda_a(&p) {
                    issues.push(Issue::new("scheme", e.to_string()));
                }
                Some(p)
            }
            Err(e) => {
                issues.push(Issue::new("scheme", e));
                None
            }
        }
    };

    if let Err(e) = s.channel.params().validate() {
        issues.push(Issue::new("channel", e.to_string()));
    }
    if !(s.channel.f_ec >= 1.0 && s.channel.f_ec.is_finite()) {
        issues.push(Issue::new(
            "channel.f_ec",
            format!("{} must be at least 1", s.channel.f_ec),
        ));
    }

    let noise = s
        .noise
        .as_ref()
        .map_or(NoiseModel::None, |n| n.model("noise", &mut issues));
    let window = s
        .window
        .as_ref()
        .and_then(|w| w.spec("window", &mut issues));

    let mut curves = Vec::new();
    if s.curves.is_empty() {
        curves.push(Curve {
            label: s.mode.name().to_string(),
            mode: s.mode,
            noise,
            window,
        });
    }
    let mut labels = HashSet::new();
    for (i, c) in s.curves.iter().enumerate() {
        let field = format!("curve[{i}]");
        if !labels.insert(c.label.as_str()) {
            issues.push(Issue::new(
                format!("{field}.label"),
                format!("duplicate label \"{}\"", c.label),
            ));
        }
        curves.push(Curve {
            label: c.label.clone(),
            mode: c.mode.unwrap_or(s.mode),
            noise: c
                .noise
                .as_ref()
                .map_or(noise, |n| n.model(&format!("{field}.noise"), &mut issues)),
            window: match &c.window {
                Some(w) => w.spec(&format!("{field}.window"), &mut issues),
                None => window,
            },
        });
    }

    if let Some(mc) = &s.monte_carlo {
        if mc.trials == 0 {
            issues.push(Issue::new("monte_carlo.trials", "must be at least 1"));
        }
    }
    if let Some(apn) = &s.apn {
        if apn.records < 2 {
            issues.push(Issue::new(
                "apn.records",
                "need at least 2 records for an interval",
            ));
        }
        if apn.window_pulses == 0 {
            issues.push(Issue::new("apn.window_pulses", "must be at least 1"));
        }
    }
    if let Some(sw) = &s.sweep {
        if !(sw.l_start >= 0.0 && sw.l_start.is_finite()) {
            issues.push(Issue::new(
                "sweep.l_start",
                "must be a non-negative distance",
            ));
        }
        if !(sw.l_end >= sw.l_start && sw.l_end.is_finite()) {
            issues.push(Issue::new("sweep.l_end", "must be at least l_start"));
        }
        if sw.l_end > sw.l_start && (sw.l_step <= 0.0 || sw.l_step.is_nan()) {
            issues.push(Issue::new("sweep.l_step", "must be positive"));
        }
    }

    let decoy = match (&s.decoy, &scheme) {
        (Some(d), Some(p)) => check_decoy(d, p, &mut issues),
        _ => None,
    };

    for (i, c) in curves.iter().enumerate() {
        let field = if s.curves.is_empty() {
            "mode".to_string()
        } else {
            format!("curve[{i}]")
        };
        let mode = c.mode.name();
        if c.mode != Mode::McPipeline && s.sweep.is_none() {
            issues.push(Issue::new(
                "sweep",
                format!("required by mode {mode} ({field})"),
            ));
        }
        if c.mode.needs_decoy() && s.decoy.is_none() {
            issues.push(Issue::new(
                "decoy",
                format!("required by mode {mode} ({field})"),
            ));
        }
        if c.mode.needs_window() {
            match c.window {
                None => issues.push(Issue::new(
                    "window",
                    format!("required by mode {mode} ({field})"),
                )),
                Some(WindowSpec::AutoMinmax) if s.monte_carlo.is_none() => issues.push(Issue::new(
                    "monte_carlo",
                    format!("an auto-minmax window needs Monte Carlo trials ({field})"),
                )),
                _ => {}
            }
            if s.monte_carlo.is_none() && c.noise != NoiseModel::None {
                issues.push(Issue::new(
                    "monte_carlo",
                    format!("a noisy monitor needs Monte Carlo trials ({field})"),
                ));
            }
        }
        if c.mode == Mode::McPipeline && s.monte_carlo.is_none() {
            issues.push(Issue::new(
                "monte_carlo",
                format!("required by mode {mode} ({field})"),
            ));
        }
    }

    if issues.is_empty() {
        Ok(Resolved {
            scenario,
            curves,
            decoy,
        })
    } else {
        Err(issues)
    }
}

fn check_decoy(
    d: &DecoySection,
    scheme: &PassiveScheme,
    issues: &mut Vec<Issue>,
) -> Option<DecoySettings> {
    let before = issues.len();
    if !(d.nu_d > 0.0 && d.nu_d < d.nu_s) {
        issues.push(Issue::new(
            "decoy.nu_d",
            format!(
                "ordering violated: need 0 < nu_d < nu_s, got nu_d = {}, nu_s = {}",
                d.nu_d, d.nu_s
            ),
        ));
    }
    let derived = DecoySettings::for_scheme(scheme, d.nu_s, d.nu_d, 1.0);
    let settings = DecoySettings {
        lambda_s: d.lambda_s.unwrap_or(derived.lambda_s),
        lambda_d: d.lambda_d.unwrap_or(derived.lambda_d),
        ..derived
    };
    if !(settings.lambda_d > 0.0 && settings.lambda_d < settings.lambda_s) {
        issues.push(Issue::new(
            "decoy.lambda_d",
            format!(
                "ordering violated: need 0 < lambda_d < lambda_s, got lambda_d = {}, lambda_s = {}",
                settings.lambda_d, settings.lambda_s
            ),
        ));
    }
    for (v, name) in [
        (settings.lambda_s, "lambda_s"),
        (settings.lambda_d, "lambda_d"),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            issues.push(Issue::new(
                format!("decoy.{name}"),
                format!("attenuator transmittance {v} must lie in (0, 1]"),
            ));
        }
    }
    let limit = scheme.xi() / (1.0 - scheme.t_b);
    if settings.lambda_s > limit {
        issues.push(Issue::new(
            "decoy.lambda_s",
            format!(
                "constraint violated: lambda_s = {} exceeds t_B t_D / (1 - t_B) = {limit}",
                settings.lambda_s
            ),
        ));
    }
    (issues.len() == before).then_some(settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
mode = "pna-bb84"
[scheme]
t_b = 0.9
t_d = 0.76
mu = 1e6
eta = 1e-7
[channel]
eta_b = 0.5
alpha_prime = 0.21
y0 = 1.7e-6
e_det = 0.033
e0 = 0.5
[window]
kind = "fixed"
m1 = 677160
m2 = 690840
[sweep]
l_start = 0
l_end = 10
l_step = 1
"#;

    #[test]
    fn base_scenario_resolves() {
        let r = resolve(parse(BASE).unwrap()).unwrap();
        assert_eq!(r.curves.len(), 1);
        assert_eq!(r.curves[0].mode, Mode::PnaBb84);
        assert_eq!(r.scenario.alpha, DEFAULT_ALPHA);
        assert_eq!(r.scenario.sweep.as_ref().unwrap().l_start, 0.0);
    }

    #[test]
    fn schema_issues_are_all_listed() {
        let text = BASE
            .replace("t_d = 0.76", "t_d = \"high\"\ncolour = 3")
            .replace("e0 = 0.5", "")
            .replace("mode = \"pna-bb84\"", "mode = \"pna\"");
        let issues = parse(&text).unwrap_err();
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        for f in ["scheme.t_d", "scheme.colour", "channel.e0", "mode"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn physics_issues_are_all_listed() {
        let text =
            format!("{BASE}\n[decoy]\nnu_s = 0.1\nnu_d = 0.5\nlambda_s = 0.7\nlambda_d = 0.1\n")
                .replace("mode = \"pna-bb84\"", "mode = \"trusted-decoy\"\nalpha = 2")
                .replace("t_d = 0.76", "t_d = 0.05");
        let issues = resolve(parse(&text).unwrap()).unwrap_err();
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        for f in ["alpha", "decoy.nu_d", "decoy.lambda_s"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn resolved_form_round_trips() {
        let r = resolve(parse(BASE).unwrap()).unwrap();
        let text = toml::to_string(&r.scenario).unwrap();
        let again = resolve(parse(&text).unwrap()).unwrap();
        assert_eq!(toml::to_string(&again.scenario).unwrap(), text);
    }
}
