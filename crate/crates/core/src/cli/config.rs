//! Strict JSON scenario configuration.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{ChainConfig, SamplingMode, DEFAULT_BUDGET_CAP};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::families::{FamilySpec, ParamPoint};
use crate::schedules::ScheduleSpec;

/// A family with its estimator and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub family: FamilySpec,
    pub estimator: EstimatorSpec,
    pub theta_star: ParamPoint,
}

/// Analytic improvement-probability rows added next to the empirical ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    /// Monte Carlo draws per value.
    pub draws: usize,
    /// Covariate draws for Monte Carlo Fisher information.
    #[serde(default = "default_fisher_draws")]
    pub fisher_draws: usize,
}

fn default_fisher_draws() -> usize {
    1_000_000
}

/// A grid of chain configurations plus batch settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub models: Vec<ModelSpec>,
    pub schedules: Vec<ScheduleSpec>,
    pub n0: Vec<usize>,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    pub seed: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub sampling: SamplingMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub budget_cap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlay: Option<Overlay>,
    /// Replications whose full trajectories are exported.
    pub trajectories: usize,
}

impl ScenarioConfig {
    /// Grid cells in model, schedule, n0 order. Every cell shares the base
    /// seed, so cells differ only through their settings.
    pub fn chain_configs(&self) -> Vec<ChainConfig> {
        let mut out = Vec::new();
        for m in &self.models {
            for s in &self.schedules {
                for &n0 in &self.n0 {
                    out.push(ChainConfig {
                        family: m.family.clone(),
                        estimator: m.estimator.clone(),
                        schedule: s.clone(),
                        theta_star: m.theta_star.clone(),
                        n0,
                        horizon: self.horizon,
                        base_seed: self.seed,
                        sampling: self.sampling,
                    });
                }
            }
        }
        out
    }

    /// Validates every grid cell and batch setting, reporting all failures.
    pub fn preflight(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.models.is_empty() || self.schedules.is_empty() || self.n0.is_empty() {
            problems.push("grid is empty: need at least one family, schedule and n0".to_string());
        }
        if self.replications == 0 {
            problems.push("R must be >= 1".into());
        }
        if !(self.delta > 0.0) {
            problems.push(format!("delta must be > 0, got {}", self.delta));
        }
        if !(self.epsilon > 0.0) {
            problems.push(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.parallelism == Some(0) {
            problems.push("parallelism must be >= 1".into());
        }
        for cell in self.chain_configs() {
            let tag = format!(
                "[{} / {} / {} / n0={}]",
                cell.family.label(),
                cell.estimator.label(),
                cell.schedule.label(),
                cell.n0
            );
            let cell_problems = cell.problems();
            if cell_problems.is_empty() {
                if let Ok(draws) = cell.draws_per_chain() {
                    let requested = draws * self.replications as f64;
                    if requested > self.budget_cap {
                        problems.push(format!(
                            "{tag} work budget exceeded: {requested:e} draws requested, cap is {:e}",
                            self.budget_cap
                        ));
                    }
                }
            }
            problems.extend(cell_problems.into_iter().map(|p| format!("{tag} {p}")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::PreFlight(problems))
        }
    }
}

/// Raw document shape; axes are decoded separately so errors can name the key.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    #[serde(default)]
    family: Option<Value>,
    #[serde(default)]
    estimator: Option<Value>,
    #[serde(default)]
    models: Option<Vec<Value>>,
    #[serde(default)]
    theta_star: Option<Value>,
    schedule: Value,
    n0: Value,
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(rename = "R")]
    replications: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default)]
    sampling: SamplingMode,
    #[serde(default)]
    parallelism: Option<usize>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    budget_cap: Option<f64>,
    #[serde(default)]
    overlay: Option<Overlay>,
    #[serde(default)]
    trajectories: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: Value,
    #[serde(default)]
    estimator: Option<Value>,
    #[serde(default)]
    theta_star: Option<Value>,
}

fn default_delta() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.05
}

fn decode<T: DeserializeOwned>(key: &str, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

/// One value or a list of values.
fn axis<T: DeserializeOwned>(key: &str, value: Value) -> Result<Vec<T>> {
    axis_with(key, value, decode)
}

/// Like [`axis`] with a custom decoder per item.
fn axis_with<T>(key: &str, value: Value, item: impl Fn(&str, Value) -> Result<T>) -> Result<Vec<T>> {
    match value {
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| item(&format!("{key}[{i}]"), v))
            .collect(),
        single => Ok(vec![item(key, single)?]),
    }
}

/// A family object, or a bare kind name for families without required fields.
fn family_spec(key: &str, value: Value) -> Result<FamilySpec> {
    match value {
        Value::String(kind) => decode(key, serde_json::json!({ "kind": kind })),
        other => decode(key, other),
    }
}

fn estimator_kind(key: &str, value: Value) -> Result<EstimatorKind> {
    match value {
        Value::String(name) => EstimatorKind::from_name(&name).map_err(|e| Error::Config(format!("`{key}`: {e}"))),
        other => decode(key, other),
    }
}

fn theta(key: &str, value: Value) -> Result<ParamPoint> {
    match value {
        Value::Number(_) => Ok(ParamPoint::scalar(decode(key, value)?)?),
        other => decode(key, other),
    }
}

/// Parses and validates a scenario configuration document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let probe: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if probe.get("seed").is_none() {
        return Err(Error::Config("seed required for reproducibility".into()));
    }
    let raw: RawConfig = serde_json::from_value(probe).map_err(|e| Error::Config(e.to_string()))?;
    let seed = raw
        .seed
        .ok_or_else(|| Error::Config("seed required for reproducibility".into()))?;

    let mut pairs: Vec<(FamilySpec, Option<EstimatorKind>, Option<ParamPoint>)> = Vec::new();
    match (raw.models, raw.family) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either `models` or `family`, not both".into()))
        }
        (Some(models), None) => {
            if raw.estimator.is_some() || raw.theta_star.is_some() {
                return Err(Error::Config(
                    "`estimator` and `theta_star` belong inside each `models` entry".into(),
                ));
            }
            for (i, m) in models.into_iter().enumerate() {
                let key = format!("models[{i}]");
                let m: RawModel = decode(&key, m)?;
                let family = family_spec(&format!("{key}.family"), m.family)?;
                let est = m.estimator.map(|e| estimator_kind(&format!("{key}.estimator"), e)).transpose()?;
                let th = m.theta_star.map(|t| theta(&format!("{key}.theta_star"), t)).transpose()?;
                pairs.push((family, est, th));
            }
        }
        (None, Some(family)) => {
            let families = axis_with("family", family, family_spec)?;
            let estimators: Vec<Option<EstimatorKind>> = match raw.estimator {
                None => vec![None],
                Some(value) => axis_with("estimator", value, |k, v| estimator_kind(k, v).map(Some))?,
            };
            let th = raw.theta_star.map(|t| theta("theta_star", t)).transpose()?;
            for f in &families {
                for e in &estimators {
                    pairs.push((f.clone(), e.clone(), th.clone()));
                }
            }
        }
        (None, None) => return Err(Error::Config("missing `family` (or `models`)".into())),
    }

    let schedules: Vec<ScheduleSpec> = axis("schedule", raw.schedule)?;
    let n0: Vec<usize> = axis("n0", raw.n0)?;

    let mut problems = Vec::new();
    let mut models = Vec::new();
    for (family, est, th) in pairs {
        let kind = est.unwrap_or_else(|| EstimatorKind::default_for(&family));
        let theta_star = th.unwrap_or_else(|| family.default_theta());
        match EstimatorSpec::for_family(kind, &family) {
            Ok(estimator) => models.push(ModelSpec {
                family,
                estimator,
                theta_star,
            }),
            Err(e) => problems.push(e.to_string()),
        }
    }
    for s in &schedules {
        if let Err(e) = s.validate() {
            problems.push(e.to_string());
        }
    }
    if !problems.is_empty() {
        return Err(Error::PreFlight(problems));
    }

    let config = ScenarioConfig {
        scenario: raw.scenario,
        models,
        schedules,
        n0,
        horizon: raw.horizon,
        replications: raw.replications,
        seed,
        delta: raw.delta,
        epsilon: raw.epsilon,
        sampling: raw.sampling,
        parallelism: raw.parallelism,
        out: raw.out,
        budget_cap: raw.budget_cap.unwrap_or(DEFAULT_BUDGET_CAP),
        overlay: raw.overlay,
        trajectories: raw.trajectories,
    };
    config.preflight()?;
    Ok(config)
}
