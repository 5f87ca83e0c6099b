//! CSV result rows.

use std::cmp::Ordering;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::engine::ReplicationSummary;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scenario,family,estimator,schedule,n0,T,R,t,metric,value,ci_low,ci_high,exclusions,seed";

/// Metrics reported as probabilities, including analytic overlays.
const PROBABILITY_METRICS: [&str; 6] = [
    "exceedance",
    "diversity",
    "improvement",
    "failure_rate",
    "drift_alignment",
    "improvement_theory",
];

/// One `(configuration, step, metric)` value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub family: String,
    pub estimator: String,
    pub schedule: String,
    pub n0: usize,
    pub horizon: usize,
    pub replications: usize,
    pub t: usize,
    pub metric: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub exclusions: u64,
    pub seed: u64,
}

impl ResultRow {
    pub fn is_probability(&self) -> bool {
        PROBABILITY_METRICS.contains(&self.metric.as_str())
    }

    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        (&self.scenario, &self.family, &self.estimator, &self.schedule, self.n0, self.t, &self.metric).cmp(&(
            &other.scenario,
            &other.family,
            &other.estimator,
            &other.schedule,
            other.n0,
            other.t,
            &other.metric,
        ))
    }
}

/// Rows for every metric and step of a summary.
pub fn summary_rows(scenario: &str, summary: &ReplicationSummary) -> Vec<ResultRow> {
    let cfg = &summary.config;
    let mut rows = Vec::new();
    for series in &summary.series {
        let probability = series.metric.is_probability();
        for point in &series.points {
            let (ci_low, ci_high) = point.ci(probability);
            rows.push(ResultRow {
                scenario: scenario.to_string(),
                family: cfg.family.label(),
                estimator: cfg.estimator.label(),
                schedule: cfg.schedule.label(),
                n0: cfg.n0,
                horizon: cfg.horizon,
                replications: summary.replications,
                t: point.t,
                metric: series.metric.name().to_string(),
                value: point.value,
                ci_low,
                ci_high,
                exclusions: point.exclusions,
                seed: cfg.base_seed,
            });
        }
    }
    rows
}

/// Round-trip exact: 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(rows: &[ResultRow], out: impl Write) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.family.clone(),
            r.estimator.clone(),
            r.schedule.clone(),
            r.n0.to_string(),
            r.horizon.to_string(),
            r.replications.to_string(),
            r.t.to_string(),
            r.metric.clone(),
            format_value(r.value),
            format_value(r.ci_low),
            format_value(r.ci_high),
            r.exclusions.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sorts, checks and writes result rows.
pub fn export_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    for r in rows.iter().filter(|r| r.is_probability() && !r.value.is_nan()) {
        if !(r.ci_low <= r.value && r.value <= r.ci_high) {
            return Err(Error::InvalidArgument(format!(
                "interval [{}, {}] does not contain {} for {} at t = {}",
                r.ci_low, r.ci_high, r.value, r.metric, r.t
            )));
        }
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(ResultRow::sort_key_cmp);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(&sorted, file).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `(scenario, family, estimator, schedule, n0, replication, t, coordinate, value)`
/// rows of exported chains, `t = 0` being `theta*`.
pub const TRAJECTORY_HEADER: &str = "scenario,family,estimator,schedule,n0,replication,t,coordinate,value";
