//! Campaign documents: strict JSON in, validated [`Campaign`] out.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use fasa_core::analysis::default_rho_grid;
use fasa_core::estimators::SchemeParams;
use fasa_core::traffic::ArrivalModel;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The offending field path, when there is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Field { path, .. } => Some(path),
            ConfigError::Syntax(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    Drift,
    Step,
    SingleEvent,
    Repetitive,
    StabilityScan,
}

impl CampaignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CampaignKind::Drift => "drift",
            CampaignKind::Step => "step",
            CampaignKind::SingleEvent => "single_event",
            CampaignKind::Repetitive => "repetitive",
            CampaignKind::StabilityScan => "stability_scan",
        }
    }

    /// CLI subcommand name.
    pub fn command(self) -> &'static str {
        match self {
            CampaignKind::Drift => "drift",
            CampaignKind::Step => "step",
            CampaignKind::SingleEvent => "single-event",
            CampaignKind::Repetitive => "repetitive",
            CampaignKind::StabilityScan => "scan",
        }
    }

    fn accepts(self, key: &str) -> bool {
        const COMMON: &[&str] = &["name", "kind", "scale", "schemes", "notes", "output_path"];
        const SIM: &[&str] = &["trials", "base_seed"];
        let specific: &[&str] = match self {
            CampaignKind::Drift => &["rho_grid"],
            CampaignKind::Step => &["n", "horizon", "x_percent", "trajectory_slots", "trace_trials"],
            CampaignKind::SingleEvent => &["n", "y_percent", "max_slots", "trace_trials"],
            CampaignKind::Repetitive => &["lambda_bar", "theta", "horizon", "warmup", "reference", "trace_trials"],
            CampaignKind::StabilityScan => &["lambda_bar", "theta", "horizons", "warmup"],
        };
        COMMON.contains(&key)
            || specific.contains(&key)
            || (self != CampaignKind::Drift && SIM.contains(&key))
    }
}

impl fmt::Display for CampaignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the perfect-information reference delay comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The Oracle sees the same arrival stream as each scheme, trial by trial.
    #[default]
    Common,
    /// The Oracle runs on its own seeds.
    Independent,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RhoGridSpec {
    start: f64,
    stop: f64,
    points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCampaign {
    name: Option<String>,
    kind: CampaignKind,
    scale: Option<String>,
    schemes: Option<Vec<String>>,
    notes: Option<Vec<String>>,
    output_path: Option<PathBuf>,
    trials: Option<u64>,
    base_seed: Option<u64>,
    n: Option<OneOrMany<u64>>,
    horizon: Option<u64>,
    horizons: Option<Vec<u64>>,
    warmup: Option<u64>,
    x_percent: Option<Vec<f64>>,
    y_percent: Option<Vec<f64>>,
    trajectory_slots: Option<u64>,
    trace_trials: Option<u64>,
    max_slots: Option<u64>,
    lambda_bar: Option<OneOrMany<f64>>,
    theta: Option<OneOrMany<f64>>,
    reference: Option<Reference>,
    rho_grid: Option<RhoGridSpec>,
}

/// One interrupted-Poisson operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficPoint {
    pub lambda_bar: f64,
    pub theta: f64,
    pub model: ArrivalModel,
}

impl TrafficPoint {
    pub fn label(&self) -> String {
        format!(
            "lambda_bar={};theta={};sigma2={}",
            self.lambda_bar,
            self.theta,
            round_sig(self.model.variance())
        )
    }
}

fn round_sig(v: f64) -> f64 {
    format!("{v:.6e}").parse().unwrap_or(v)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Drift {
        rho_grid: Vec<f64>,
    },
    Step {
        n: Vec<u64>,
        horizon: u64,
        x_percent: Vec<f64>,
        trajectory_slots: u64,
    },
    SingleEvent {
        n: Vec<u64>,
        y_percent: Vec<f64>,
        max_slots: Option<u64>,
    },
    Repetitive {
        points: Vec<TrafficPoint>,
        horizon: u64,
        warmup: u64,
        reference: Reference,
    },
    StabilityScan {
        points: Vec<TrafficPoint>,
        horizons: Vec<u64>,
        warmup: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub name: String,
    pub kind: CampaignKind,
    pub scale: Option<String>,
    pub schemes: Vec<SchemeParams>,
    pub trials: u64,
    pub base_seed: u64,
    pub trace_trials: u64,
    pub plan: Plan,
    pub notes: Vec<String>,
    pub output_path: Option<PathBuf>,
    /// The document as given, for the manifest.
    pub source: Value,
}

pub const DEFAULT_BASE_SEED: u64 = 1;
pub const DEFAULT_X_PERCENT: [f64; 3] = [10.0, 50.0, 90.0];
pub const DEFAULT_Y_PERCENT: [f64; 3] = [10.0, 50.0, 90.0];
pub const DEFAULT_TRAJECTORY_SLOTS: u64 = 300;

pub fn parse_campaign(text: &str) -> Result<Campaign, ConfigError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    campaign_from_value(value)
}

pub fn campaign_from_value(value: Value) -> Result<Campaign, ConfigError> {
    let Some(object) = value.as_object() else {
        return Err(ConfigError::field(".", "campaign must be a JSON object"));
    };
    let raw: RawCampaign = serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        ConfigError::field(path, message)
    })?;
    if let Some(key) = object.keys().find(|k| !raw.kind.accepts(k)) {
        return Err(ConfigError::field(
            key.clone(),
            format!("not used by kind `{}`", raw.kind),
        ));
    }
    build(raw, value)
}

fn required<T>(v: Option<T>, name: &str, kind: CampaignKind) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::field(name, format!("missing required field for kind `{kind}`")))
}

fn positive(v: u64, name: &str) -> Result<u64, ConfigError> {
    if v == 0 {
        Err(ConfigError::field(name, "must be at least 1"))
    } else {
        Ok(v)
    }
}

fn percents(v: Option<Vec<f64>>, default: &[f64], name: &str, allow_100: bool) -> Result<Vec<f64>, ConfigError> {
    let v = v.unwrap_or_else(|| default.to_vec());
    if v.is_empty() {
        return Err(ConfigError::field(name, "must not be empty"));
    }
    for (i, x) in v.iter().enumerate() {
        let ok = *x > 0.0 && (*x < 100.0 || (allow_100 && *x == 100.0));
        if !ok {
            return Err(ConfigError::field(
                format!("{name}[{i}]"),
                format!("percent out of range, got {x}"),
            ));
        }
    }
    Ok(v)
}

fn nonempty<T>(v: Vec<T>, name: &str) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        Err(ConfigError::field(name, "must not be empty"))
    } else {
        Ok(v)
    }
}

fn traffic_points(
    lambda_bar: Vec<f64>,
    theta: Vec<f64>,
) -> Result<Vec<TrafficPoint>, ConfigError> {
    let lambda_bar = nonempty(lambda_bar, "lambda_bar")?;
    let theta = nonempty(theta, "theta")?;
    let mut points = Vec::new();
    for (i, &lb) in lambda_bar.iter().enumerate() {
        if !(lb > 0.0 && lb.is_finite()) {
            return Err(ConfigError::field(
                format!("lambda_bar[{i}]"),
                format!("must be positive, got {lb}"),
            ));
        }
        for (j, &th) in theta.iter().enumerate() {
            let model = ArrivalModel::from_rate(lb, th)
                .map_err(|e| ConfigError::field(format!("theta[{j}]"), e.to_string()))?;
            points.push(TrafficPoint {
                lambda_bar: lb,
                theta: th,
                model,
            });
        }
    }
    Ok(points)
}

fn build(raw: RawCampaign, source: Value) -> Result<Campaign, ConfigError> {
    let kind = raw.kind;
    let scheme_strings = nonempty(required(raw.schemes, "schemes", kind)?, "schemes")?;
    let schemes = parse_schemes(&scheme_strings)?;

    let simulated = kind != CampaignKind::Drift;
    let trials = if simulated {
        positive(required(raw.trials, "trials", kind)?, "trials")?
    } else {
        1
    };

    let plan = match kind {
        CampaignKind::Drift => {
            if let Some(i) = schemes.iter().position(|s| drift_source_supported(s).is_err()) {
                return Err(ConfigError::field(
                    format!("schemes[{i}]"),
                    "scheme has no offered-load drift curve",
                ));
            }
            let rho_grid = match raw.rho_grid {
                None => default_rho_grid(),
                Some(g) => {
                    if !(g.start > 0.0 && g.stop >= g.start && g.stop.is_finite()) {
                        return Err(ConfigError::field(
                            "rho_grid",
                            "need 0 < start <= stop",
                        ));
                    }
                    if g.points < 2 {
                        return Err(ConfigError::field("rho_grid.points", "must be at least 2"));
                    }
                    let step = (g.stop - g.start) / (g.points - 1) as f64;
                    (0..g.points).map(|i| g.start + step * i as f64).collect()
                }
            };
            Plan::Drift { rho_grid }
        }
        CampaignKind::Step => {
            let n = nonempty(required(raw.n, "n", kind)?.into_vec(), "n")?;
            for (i, v) in n.iter().enumerate() {
                positive(*v, &format!("n[{i}]"))?;
            }
            let horizon = positive(required(raw.horizon, "horizon", kind)?, "horizon")?;
            Plan::Step {
                n,
                horizon,
                x_percent: percents(raw.x_percent, &DEFAULT_X_PERCENT, "x_percent", false)?,
                trajectory_slots: raw
                    .trajectory_slots
                    .unwrap_or(DEFAULT_TRAJECTORY_SLOTS)
                    .min(horizon),
            }
        }
        CampaignKind::SingleEvent => {
            let n = nonempty(required(raw.n, "n", kind)?.into_vec(), "n")?;
            for (i, v) in n.iter().enumerate() {
                positive(*v, &format!("n[{i}]"))?;
            }
            let max_slots = raw.max_slots.map(|m| positive(m, "max_slots")).transpose()?;
            Plan::SingleEvent {
                n,
                y_percent: percents(raw.y_percent, &DEFAULT_Y_PERCENT, "y_percent", true)?,
                max_slots,
            }
        }
        CampaignKind::Repetitive => {
            let points = traffic_points(
                required(raw.lambda_bar, "lambda_bar", kind)?.into_vec(),
                required(raw.theta, "theta", kind)?.into_vec(),
            )?;
            let horizon = positive(required(raw.horizon, "horizon", kind)?, "horizon")?;
            let warmup = raw.warmup.unwrap_or(horizon / 10);
            if warmup >= horizon {
                return Err(ConfigError::field("warmup", "must be smaller than horizon"));
            }
            Plan::Repetitive {
                points,
                horizon,
                warmup,
                reference: raw.reference.unwrap_or_default(),
            }
        }
        CampaignKind::StabilityScan => {
            let points = traffic_points(
                required(raw.lambda_bar, "lambda_bar", kind)?.into_vec(),
                required(raw.theta, "theta", kind)?.into_vec(),
            )?;
            let mut horizons = nonempty(required(raw.horizons, "horizons", kind)?, "horizons")?;
            for (i, h) in horizons.iter().enumerate() {
                positive(*h, &format!("horizons[{i}]"))?;
            }
            horizons.sort_unstable();
            horizons.dedup();
            let last = *horizons.last().expect("nonempty");
            let warmup = raw.warmup.unwrap_or(horizons[0] / 10);
            if warmup >= horizons[0] {
                return Err(ConfigError::field("warmup", "must be smaller than every horizon"));
            }
            debug_assert!(warmup < last);
            Plan::StabilityScan {
                points,
                horizons,
                warmup,
            }
        }
    };

    Ok(Campaign {
        name: raw.name.unwrap_or_else(|| kind.as_str().to_string()),
        kind,
        scale: raw.scale,
        schemes,
        trials,
        base_seed: raw.base_seed.unwrap_or(DEFAULT_BASE_SEED),
        trace_trials: raw.trace_trials.unwrap_or(0).min(trials),
        plan,
        notes: raw.notes.unwrap_or_default(),
        output_path: raw.output_path,
        source,
    })
}

pub fn parse_schemes(strings: &[String]) -> Result<Vec<SchemeParams>, ConfigError> {
    strings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            SchemeParams::from_str(s)
                .map_err(|e| ConfigError::field(format!("schemes[{i}]"), e.to_string()))
        })
        .collect()
}

pub(crate) fn drift_source_supported(s: &SchemeParams) -> Result<(), ()> {
    match s {
        SchemeParams::Fasa(_) | SchemeParams::Pb { .. } | SchemeParams::Kelly { .. } => Ok(()),
        SchemeParams::QPlus { .. } | SchemeParams::Oracle => Err(()),
    }
}

impl Campaign {
    /// Replace the scheme list, as the CLI's `--scheme` does.
    pub fn with_schemes(mut self, strings: &[String]) -> Result<Self, ConfigError> {
        let schemes = parse_schemes(strings)?;
        if self.kind == CampaignKind::Drift {
            if let Some(i) = schemes.iter().position(|s| drift_source_supported(s).is_err()) {
                return Err(ConfigError::field(
                    format!("schemes[{i}]"),
                    "scheme has no offered-load drift curve",
                ));
            }
        }
        self.schemes = schemes;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }
}
