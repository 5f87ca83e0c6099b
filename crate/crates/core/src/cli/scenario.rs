//! Batch execution of a scenario grid.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::analytics::{fisher_information, improvement_probability_shared, SharedDraws};
use crate::cli::config::ScenarioConfig;
use crate::cli::export::{export_csv, summary_rows, ResultRow, TRAJECTORY_HEADER};
use crate::engine::{default_parallelism, run_monte_carlo, MonteCarloOptions};
use crate::error::{Error, Result};
use crate::rng;

/// Stream index reserved for analytic overlays, far from replication indices.
const OVERLAY_STREAM: u64 = u64::MAX - 1;

/// One coordinate of one exported chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub family: String,
    pub estimator: String,
    pub schedule: String,
    pub n0: usize,
    pub replication: usize,
    pub t: usize,
    pub coordinate: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub rows: Vec<ResultRow>,
    pub trajectories: Vec<TrajectoryRow>,
}

/// Runs every grid cell after pre-flight validation of the whole grid.
pub fn run_scenario(config: &ScenarioConfig, progress: bool) -> Result<ScenarioOutput> {
    config.preflight()?;
    let workers = config.parallelism.unwrap_or_else(default_parallelism);
    let options = MonteCarloOptions::new(config.replications)
        .delta(config.delta)
        .epsilon(config.epsilon)
        .parallelism(workers)
        .budget_cap(config.budget_cap);
    let cells = config.chain_configs();
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let started = Instant::now();
        let summary = run_monte_carlo(cell, &options)?;
        rows.extend(summary_rows(&config.scenario, &summary));
        if config.trajectories > 0 {
            let chain = cell.prepare()?;
            for rep in 0..config.trajectories.min(config.replications) {
                let traj = chain.run(&mut rng::split(cell.base_seed, rep as u64));
                let states = std::iter::once(&cell.theta_star).chain(traj.estimates.iter());
                for (t, theta) in states.enumerate() {
                    for (coordinate, &value) in theta.values().iter().enumerate() {
                        trajectories.push(TrajectoryRow {
                            family: cell.family.label(),
                            estimator: cell.estimator.label(),
                            schedule: cell.schedule.label(),
                            n0: cell.n0,
                            replication: rep,
                            t,
                            coordinate,
                            value,
                        });
                    }
                }
            }
        }
        if progress {
            eprintln!(
                "[{}/{}] {} / {} / {} / n0={} done in {:.1}s",
                i + 1,
                cells.len(),
                cell.family,
                cell.estimator,
                cell.schedule,
                cell.n0,
                started.elapsed().as_secs_f64()
            );
        }
    }
    if let Some(overlay) = config.overlay {
        rows.extend(overlay_rows(config, overlay.draws, overlay.fisher_draws)?);
    }
    Ok(ScenarioOutput { rows, trajectories })
}

/// Asymptotic improvement probability for each model and schedule at
/// `t = 2..T`, as `improvement_theory` rows with `estimator = theory`, `n0 = 0`.
fn overlay_rows(config: &ScenarioConfig, draws: usize, fisher_draws: usize) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut stream = rng::split(config.seed, OVERLAY_STREAM);
    for m in &config.models {
        let info = fisher_information(&m.family, &m.theta_star, fisher_draws, &mut stream)?;
        let shared = SharedDraws::new(m.family.dim(), draws, &mut stream)?;
        for s in &config.schedules {
            for t in 2..=config.horizon {
                let v = s.inverse_coefficient_sum(t)?;
                let est = improvement_probability_shared(&info.covariance, v, &shared)?;
                rows.push(ResultRow {
                    scenario: config.scenario.clone(),
                    family: m.family.label(),
                    estimator: "theory".into(),
                    schedule: s.label(),
                    n0: 0,
                    horizon: config.horizon,
                    replications: draws,
                    t,
                    metric: "improvement_theory".into(),
                    value: est.value,
                    ci_low: (est.value - est.half_width).max(0.0),
                    ci_high: (est.value + est.half_width).min(1.0),
                    exclusions: 0,
                    seed: config.seed,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    scenario: &'a str,
    seed: u64,
    results: String,
    rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectories: Option<String>,
    config: &'a ScenarioConfig,
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFiles {
    pub results: PathBuf,
    pub manifest: PathBuf,
    pub trajectories: Option<PathBuf>,
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes `<scenario>.csv`, `<scenario>.manifest.json` and, when requested,
/// `<scenario>.trajectories.csv` into `dir`.
pub fn write_outputs(config: &ScenarioConfig, output: &ScenarioOutput, dir: &Path) -> Result<WrittenFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join(format!("{}.csv", config.scenario));
    export_csv(&output.rows, &results)?;

    let trajectories = if output.trajectories.is_empty() {
        None
    } else {
        let path = dir.join(format!("{}.trajectories.csv", config.scenario));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let io_err = |e: csv::Error| Error::Io {
            path: path.clone(),
            message: e.to_string(),
        };
        w.write_record(TRAJECTORY_HEADER.split(',')).map_err(io_err)?;
        for r in &output.trajectories {
            w.write_record([
                config.scenario.clone(),
                r.family.clone(),
                r.estimator.clone(),
                r.schedule.clone(),
                r.n0.to_string(),
                r.replication.to_string(),
                r.t.to_string(),
                r.coordinate.to_string(),
                crate::cli::export::format_value(r.value),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Some(path)
    };

    let manifest_path = dir.join(format!("{}.manifest.json", config.scenario));
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: &config.scenario,
        seed: config.seed,
        results: file_name(&results),
        rows: output.rows.len(),
        trajectories: trajectories.as_deref().map(file_name),
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(WrittenFiles {
        results,
        manifest: manifest_path,
        trajectories,
    })
}
