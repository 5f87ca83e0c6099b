//! Built-in scenario grids.

use crate::cli::config::{ModelSpec, Overlay, ScenarioConfig};
use crate::engine::{SamplingMode, DEFAULT_BUDGET_CAP};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::families::{FamilySpec, ParamPoint};
use crate::schedules::ScheduleSpec;

pub const PRESETS: [&str; 5] = [
    "scenario1",
    "scenario2-gaussian",
    "scenario2-exponential",
    "scenario2-logistic",
    "scenario3",
];

/// Replication scale of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Minutes on a workstation.
    Desk,
    /// Replication counts of the reference experiments.
    Full,
}

const DEFAULT_SEED: u64 = 20_240_601;
const FULL_BUDGET_CAP: f64 = 1e12;

fn model(family: FamilySpec, kind: EstimatorKind, theta: Vec<f64>) -> Result<ModelSpec> {
    Ok(ModelSpec {
        estimator: EstimatorSpec::for_family(kind, &family)?,
        family,
        theta_star: ParamPoint::new(theta)?,
    })
}

fn base(name: &str, scale: Scale) -> ScenarioConfig {
    ScenarioConfig {
        scenario: name.to_string(),
        models: vec![],
        schedules: vec![],
        n0: vec![],
        horizon: 1,
        replications: 1,
        seed: DEFAULT_SEED,
        delta: 1.0,
        epsilon: 0.05,
        sampling: SamplingMode::Full,
        parallelism: None,
        out: None,
        budget_cap: match scale {
            Scale::Desk => DEFAULT_BUDGET_CAP,
            Scale::Full => FULL_BUDGET_CAP,
        },
        overlay: None,
        trajectories: 0,
    }
}

fn scenario2_schedules() -> Vec<ScheduleSpec> {
    vec![
        ScheduleSpec::Constant { c: 1.0 },
        ScheduleSpec::Polynomial { a: 1.0 },
        ScheduleSpec::Polynomial { a: 1.5 },
    ]
}

fn scenario2(name: &str, scale: Scale, m: ModelSpec) -> ScenarioConfig {
    let mut c = base(name, scale);
    c.models = vec![m];
    c.schedules = scenario2_schedules();
    c.n0 = vec![100, 200, 400];
    c.horizon = 10;
    c.replications = match scale {
        Scale::Desk => 10_000,
        Scale::Full => 1_000_000,
    };
    c.overlay = Some(Overlay {
        draws: match scale {
            Scale::Desk => 100_000,
            Scale::Full => 1_000_000,
        },
        fisher_draws: 1_000_000,
    });
    c
}

/// A built-in scenario by name.
pub fn preset(name: &str, scale: Scale) -> Result<ScenarioConfig> {
    let config = match name {
        "scenario1" => {
            let mut c = base(name, scale);
            c.models = vec![
                model(FamilySpec::GammaScale { shape: 2.0 }, EstimatorKind::GammaScaleMle { shape: None }, vec![1.0])?,
                model(FamilySpec::ExponentialRate { dim: 1 }, EstimatorKind::ExponentialMle, vec![1.0])?,
                model(FamilySpec::gaussian_mean(1), EstimatorKind::SampleMean, vec![0.0])?,
            ];
            c.schedules = vec![ScheduleSpec::Constant { c: 1.0 }, ScheduleSpec::Polynomial { a: 1.1 }];
            c.n0 = vec![100];
            c.horizon = 2000;
            c.replications = match scale {
                Scale::Desk => 200,
                Scale::Full => 1000,
            };
            // n_t reaches ~4e5 at t = 2000; every pair here has an exact
            // sufficient-statistic sampler
            c.sampling = SamplingMode::Sufficient;
            c
        }
        "scenario2-gaussian" => scenario2(
            name,
            scale,
            model(FamilySpec::gaussian_mean(2), EstimatorKind::SampleMean, vec![0.0, 0.0])?,
        ),
        "scenario2-exponential" => scenario2(
            name,
            scale,
            model(FamilySpec::ExponentialRate { dim: 2 }, EstimatorKind::ExponentialMle, vec![1.0, 2.0])?,
        ),
        "scenario2-logistic" => scenario2(
            name,
            scale,
            model(
                FamilySpec::LogisticRegression { dim: 2 },
                EstimatorKind::LogisticMle { max_iter: 100, tol: 1e-8 },
                vec![1.0, -1.0],
            )?,
        ),
        "scenario3" => {
            let mut c = base(name, scale);
            for p in [2usize, 4, 8] {
                let family = FamilySpec::gaussian_mean(p);
                c.models.push(model(family.clone(), EstimatorKind::BiasedMean { b: 1.0 }, vec![0.0; p])?);
                c.models.push(model(family, EstimatorKind::PrefixMean { count: 100 }, vec![0.0; p])?);
            }
            c.schedules = vec![ScheduleSpec::Constant { c: 1.0 }];
            c.n0 = vec![200];
            c.horizon = 100;
            c.replications = match scale {
                Scale::Desk => 1_000,
                Scale::Full => 10_000,
            };
            c.trajectories = 20;
            c
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; available presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_passes_preflight() {
        for name in PRESETS {
            for scale in [Scale::Desk, Scale::Full] {
                let c = preset(name, scale).unwrap();
                c.preflight().unwrap_or_else(|e| panic!("{name}: {e}"));
            }
        }
    }

    #[test]
    fn unknown_preset_lists_names() {
        let err = preset("scenario9", Scale::Desk).unwrap_err().to_string();
        for name in PRESETS {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn grids_have_expected_shape() {
        assert_eq!(preset("scenario1", Scale::Desk).unwrap().chain_configs().len(), 6);
        assert_eq!(preset("scenario2-gaussian", Scale::Desk).unwrap().chain_configs().len(), 9);
        let s3 = preset("scenario3", Scale::Desk).unwrap();
        assert_eq!(s3.chain_configs().len(), 6);
        assert_eq!(s3.replications, 1000);
    }
}
