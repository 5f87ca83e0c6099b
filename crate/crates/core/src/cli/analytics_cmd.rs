//! The `analytics` subcommand: closed forms printed as labelled rows.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use clap::Subcommand;
use nalgebra::DMatrix;

use crate::analytics;
use crate::cli::export::format_value;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::families::{FamilySpec, ParamPoint};
use crate::rng;
use crate::schedules::{collapse_threshold, Horizon, ScheduleSpec, SeriesLimit};

/// Parses `constant:1`, `polynomial:1.1`, `geometric:2` or a JSON object.
pub fn parse_schedule(text: &str) -> Result<ScheduleSpec> {
    let spec = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("schedule: {e}")))?
    } else {
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("schedule `{text}` is not `kind:value`")))?;
        let x: f64 = arg
            .parse()
            .map_err(|_| Error::Config(format!("schedule value `{arg}` is not a number")))?;
        match kind {
            "constant" => ScheduleSpec::Constant { c: x },
            "polynomial" => ScheduleSpec::Polynomial { a: x },
            "geometric" => ScheduleSpec::Geometric { b: x },
            other => return Err(Error::Config(format!("unknown schedule kind `{other}`"))),
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_family(text: &str) -> Result<FamilySpec> {
    let spec: FamilySpec = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("family: {e}")))?
    } else {
        serde_json::from_value(serde_json::json!({ "kind": text }))
            .map_err(|e| Error::Config(format!("family: {e}")))?
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_theta(text: &str) -> Result<ParamPoint> {
    let values = text
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("`{x}` is not a number"))))
        .collect::<Result<Vec<f64>>>()?;
    ParamPoint::new(values)
}

/// Covariance: `identity:p`, `diag:a,b,...` or a JSON array of rows.
fn parse_covariance(text: &str) -> Result<DMatrix<f64>> {
    if let Some(p) = text.strip_prefix("identity:") {
        let p: usize = p.parse().map_err(|_| Error::InvalidArgument(format!("bad dimension `{p}`")))?;
        return Ok(DMatrix::identity(p, p));
    }
    if let Some(d) = text.strip_prefix("diag:") {
        let diag = parse_theta(d)?;
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag.values())));
    }
    let rows: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("covariance: {e}")))?;
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument("covariance must be square".into()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

#[derive(Debug, Subcommand)]
pub enum AnalyticsCommand {
    /// Per-coordinate mean squared error of the Gaussian mean chain.
    GaussianMse {
        #[arg(long)]
        n0: usize,
        #[arg(long)]
        schedule: String,
        /// Integer T or `inf`.
        #[arg(long)]
        horizon: String,
    },
    /// Population risk of the known-mean variance chain.
    VarianceRisk {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma_sq: f64,
    },
    /// Per-step downward drift of the log variance.
    LogDrift {
        #[arg(long)]
        n: usize,
    },
    /// Monte Carlo improvement probability for a covariance and v.
    Improvement {
        /// `identity:p`, `diag:a,b` or JSON rows.
        #[arg(long)]
        covariance: String,
        #[arg(long)]
        v: f64,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Identity-covariance lower and upper bounds on the improvement probability.
    IdentityBounds {
        #[arg(long)]
        v: f64,
        #[arg(long)]
        p: usize,
    },
    /// Union bound over increments for an estimator's tail constants.
    UnionBound {
        #[arg(long)]
        family: String,
        /// Estimator name; the family's default when omitted.
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        n0: usize,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long)]
        horizon: String,
    },
    /// Sharp Gaussian-mean exceedance bound.
    SharpBound {
        #[arg(long)]
        n0: usize,
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        horizon: String,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long)]
        p: usize,
    },
    /// Inverse-coefficient sum and drift ratio of a schedule.
    Schedule {
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        horizon: String,
    },
    /// Polynomial exponent a schedule needs to prevent collapse.
    Threshold {
        #[arg(long)]
        family: String,
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Asymptotic improvement probability from the asymptotic covariance.
    Asymptotic {
        #[arg(long)]
        family: String,
        /// Comma-separated coordinates; the family default when omitted.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn estimator_for(family: &FamilySpec, name: Option<&str>) -> Result<EstimatorSpec> {
    let kind = match name {
        Some(n) if n.trim_start().starts_with('{') => {
            serde_json::from_str(n).map_err(|e| Error::Config(format!("estimator: {e}")))?
        }
        Some(n) => EstimatorKind::from_name(n)?,
        None => EstimatorKind::default_for(family),
    };
    EstimatorSpec::for_family(kind, family)
}

fn limit_row(label: &str, limit: SeriesLimit) -> (String, String) {
    match limit {
        SeriesLimit::Converged(v) => (label.to_string(), format_value(v)),
        SeriesLimit::Diverged => (label.to_string(), "diverges".to_string()),
    }
}

/// Evaluates a command into `(label, value)` rows.
pub fn evaluate(cmd: &AnalyticsCommand) -> Result<Vec<(String, String)>> {
    let row = |label: &str, v: f64| (label.to_string(), format_value(v));
    let rows = match cmd {
        AnalyticsCommand::GaussianMse { n0, schedule, horizon } => {
            let h: Horizon = horizon.parse()?;
            vec![row("gaussian_mean_mse", analytics::gaussian_mean_mse(*n0, &parse_schedule(schedule)?, h)?)]
        }
        AnalyticsCommand::VarianceRisk { n, horizon, sigma_sq } => {
            vec![row("variance_chain_risk", analytics::variance_chain_risk(*n, *horizon, *sigma_sq)?)]
        }
        AnalyticsCommand::LogDrift { n } => {
            let drift = analytics::variance_chain_log_drift(*n)?;
            vec![row("log_drift", drift), row("lower_bound_1/(3n)", 1.0 / (3.0 * *n as f64))]
        }
        AnalyticsCommand::Improvement { covariance, v, draws, seed } => {
            let cov = parse_covariance(covariance)?;
            let shared = analytics::SharedDraws::new(cov.nrows(), *draws, &mut rng::stream(*seed))?;
            let est = analytics::improvement_probability_shared(&cov, *v, &shared)?;
            let bracket = analytics::eigen_bracket(&cov, *v, &shared)?;
            vec![
                row("improvement_probability", est.value),
                row("half_width", est.half_width),
                row("eigen_bracket_lambda_min", bracket.at_lambda_min),
                row("eigen_bracket_lambda_max", bracket.at_lambda_max),
            ]
        }
        AnalyticsCommand::IdentityBounds { v, p } => {
            let b = analytics::improvement_bounds_identity(*v, *p)?;
            let mut out = vec![row("lower", b.lower)];
            match (b.upper, b.upper_unclamped) {
                (Some(u), Some(raw)) => {
                    out.push(row("upper", u));
                    out.push(row("upper_unclamped", raw));
                }
                _ => out.push(("upper".into(), "undefined for p = 1".into())),
            }
            out
        }
        AnalyticsCommand::UnionBound { family, estimator, schedule, n0, delta, s, horizon } => {
            let family = parse_family(family)?;
            let est = estimator_for(&family, estimator.as_deref())?;
            let tail = est
                .tail
                .ok_or_else(|| Error::Unsupported(format!("`{est}` has no tail-bound metadata")))?;
            let b = analytics::union_tail_bound(&tail, &parse_schedule(schedule)?, *n0, *delta, *s, horizon.parse()?)?;
            if b.diverged {
                vec![("union_tail_bound".into(), "diverges (bound = 1)".into())]
            } else {
                vec![row("union_tail_bound", b.bound), row("raw", b.raw), row("terms", b.terms as f64)]
            }
        }
        AnalyticsCommand::SharpBound { n0, schedule, horizon, delta, p } => {
            let v = analytics::sharp_gaussian_bound(*n0, &parse_schedule(schedule)?, horizon.parse()?, *delta, *p)?;
            vec![row("sharp_gaussian_bound", v)]
        }
        AnalyticsCommand::Schedule { schedule, horizon } => {
            let s = parse_schedule(schedule)?;
            match horizon.parse()? {
                Horizon::Finite(t) => vec![
                    row("inverse_coefficient_sum", s.inverse_coefficient_sum(t)?),
                    row("drift_ratio", s.drift_ratio(t)?),
                ],
                Horizon::Infinite => vec![
                    limit_row("inverse_coefficient_sum", s.inverse_coefficient_limit()?),
                    limit_row("drift_ratio", s.drift_ratio_limit()?),
                ],
            }
        }
        AnalyticsCommand::Threshold { family, estimator } => {
            let family = parse_family(family)?;
            let est = estimator_for(&family, estimator.as_deref())?;
            let tail = est
                .tail
                .ok_or_else(|| Error::Unsupported(format!("`{est}` has no tail-bound metadata")))?;
            let th = collapse_threshold(&tail, &est.bias)?;
            vec![
                ("regime".into(), format!("{:?}", th.regime)),
                ("exponent_must_exceed".into(), format_value(th.exponent)),
            ]
        }
        AnalyticsCommand::Asymptotic { family, theta, schedule, horizon, draws, seed } => {
            let family = parse_family(family)?;
            let theta = match theta {
                Some(t) => parse_theta(t)?,
                None => family.default_theta(),
            };
            let est = analytics::improvement_probability_asymptotic(
                &family,
                &theta,
                &parse_schedule(schedule)?,
                *horizon,
                *draws,
                &mut rng::stream(*seed),
            )?;
            vec![row("improvement_asymptotic", est.value), row("half_width", est.half_width), row("v", est.v)]
        }
    };
    Ok(rows)
}

/// Appends `quantity,value` rows to a CSV file, writing a header for new files.
pub fn append_csv(path: &PathBuf, command: &str, rows: &[(String, String)]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str("command,quantity,value\n");
    }
    for (label, value) in rows {
        text.push_str(&format!("{command},{label},{value}\n"));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
