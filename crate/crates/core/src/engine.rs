//! Recursive chains and replicated Monte Carlo batches.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, EstimatorSpec};
use crate::families::{Family, FamilySpec, ParamPoint, Validity};
use crate::rng::{self, Stream};
use crate::schedules::ScheduleSpec;

/// Estimates with a coordinate beyond this magnitude count as a failed chain.
pub const DIVERGENCE_CAP: f64 = 1e300;

/// Replications per accumulation block. Blocks are merged in index order, so
/// results do not depend on the worker count.
const BLOCK: usize = 256;

/// Default cap on `R * sum_t n_t * draws_per_observation`.
pub const DEFAULT_BUDGET_CAP: f64 = 1e11;

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.96;

/// How a step turns `theta_t` into `theta_{t+1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Draw all `n_t` observations and apply the estimator.
    #[default]
    Full,
    /// Draw the estimator's sufficient statistic from its exact law, e.g.
    /// `mean ~ N(theta, Sigma/n)`. Same distribution, O(p) work per step.
    Sufficient,
}

/// One recursive-training setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub family: FamilySpec,
    pub estimator: EstimatorSpec,
    pub schedule: ScheduleSpec,
    pub theta_star: ParamPoint,
    pub n0: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub sampling: SamplingMode,
}

impl ChainConfig {
    /// Every violated constraint, as readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.family.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.schedule.validate() {
            out.push(e.to_string());
        }
        match EstimatorSpec::for_family(self.estimator.kind.clone(), &self.family) {
            Err(e) => out.push(e.to_string()),
            Ok(resolved) if resolved.kind != self.estimator.kind => {
                out.push(format!("estimator `{}` has unresolved parameters", self.estimator.label()))
            }
            Ok(_) => {}
        }
        if let Validity::Invalid(reason) = crate::families::validate_param(&self.family, &self.theta_star) {
            out.push(format!("theta_star: {reason}"));
        }
        if self.horizon == 0 {
            out.push("T must be >= 1".into());
        }
        if self.n0 == 0 {
            out.push("n0 must be >= 1".into());
        } else if self.n0 < self.estimator.min_rows() {
            out.push(format!(
                "n0 = {} is below the {} rows `{}` needs",
                self.n0,
                self.estimator.min_rows(),
                self.estimator.label()
            ));
        }
        if self.sampling == SamplingMode::Sufficient && !has_sufficient_sampler(&self.family, &self.estimator) {
            out.push(format!(
                "no sufficient-statistic sampler for `{}` on `{}`; use sampling = full",
                self.estimator.label(),
                self.family.label()
            ));
        }
        if self.schedule.validate().is_ok() && self.n0 > 0 {
            if let Err(e) = self.schedule.step_sizes(self.n0, self.horizon) {
                out.push(e.to_string());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::PreFlight(problems))
        }
    }

    pub fn prepare(&self) -> Result<PreparedChain> {
        self.validate()?;
        Ok(PreparedChain {
            family: Family::new(self.family.clone())?,
            estimator: self.estimator.clone(),
            theta_star: self.theta_star.clone(),
            step_sizes: self.schedule.step_sizes(self.n0, self.horizon)?,
            sampling: self.sampling,
        })
    }

    /// Random draws one chain consumes.
    pub fn draws_per_chain(&self) -> Result<f64> {
        if self.sampling == SamplingMode::Sufficient {
            return Ok((self.horizon * self.family.dim()) as f64);
        }
        let per_obs = Family::new(self.family.clone())?.draws_per_observation() as f64;
        let total: f64 = self
            .schedule
            .step_sizes(self.n0, self.horizon)?
            .iter()
            .map(|&n| n as f64)
            .sum();
        Ok(total * per_obs)
    }
}

/// Why and where a chain stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFailure {
    /// Step whose estimate could not be produced or was invalid.
    pub step: usize,
    pub cause: String,
}

/// One simulated chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `theta_1 .. theta_T`, truncated before a failed step.
    pub estimates: Vec<ParamPoint>,
    /// `n_0 .. n_{T-1}`.
    pub step_sizes: Vec<usize>,
    /// `xi_t = theta_t - theta_{t-1}` with `theta_0 = theta*`.
    pub increments: Vec<ParamPoint>,
    pub failure: Option<ChainFailure>,
}

impl Trajectory {
    /// `|(theta_T - theta*) - sum xi_t|` relative to the largest estimate norm.
    pub fn telescoping_residual(&self, theta_star: &ParamPoint) -> f64 {
        let Some(last) = self.estimates.last() else {
            return 0.0;
        };
        let p = theta_star.dim();
        let mut sum = vec![0.0; p];
        for xi in &self.increments {
            sum.iter_mut().zip(xi.values()).for_each(|(s, x)| *s += x);
        }
        let direct = last.sub(theta_star);
        let err = direct
            .values()
            .iter()
            .zip(&sum)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = self
            .estimates
            .iter()
            .map(ParamPoint::norm)
            .fold(theta_star.norm(), f64::max)
            .max(f64::MIN_POSITIVE);
        err / scale
    }
}

/// A validated chain ready to run many times.
#[derive(Debug, Clone)]
pub struct PreparedChain {
    family: Family,
    estimator: EstimatorSpec,
    theta_star: ParamPoint,
    step_sizes: Vec<usize>,
    sampling: SamplingMode,
}

/// Whether [`SamplingMode::Sufficient`] supports this pair.
pub fn has_sufficient_sampler(family: &FamilySpec, estimator: &EstimatorSpec) -> bool {
    match (family, &estimator.kind) {
        (
            FamilySpec::GaussianMean { .. },
            EstimatorKind::SampleMean
            | EstimatorKind::PrefixMean { .. }
            | EstimatorKind::BiasedMean { .. }
            | EstimatorKind::HarmonicWeightedMean,
        ) => true,
        (FamilySpec::GaussianVariance { mean }, EstimatorKind::VarianceKnownMean { mu }) => *mu == Some(*mean),
        (FamilySpec::ExponentialRate { .. }, EstimatorKind::ExponentialMle)
        | (FamilySpec::GammaScale { .. }, EstimatorKind::GammaScaleMle { .. })
        | (FamilySpec::UniformUpper { .. }, EstimatorKind::MaxObservation) => true,
        _ => false,
    }
}

fn gamma_draw(shape: f64, scale: f64, rng: &mut Stream) -> Result<f64> {
    Gamma::new(shape, scale)
        .map(|g| g.sample(rng))
        .map_err(|e| Error::ParameterDomain(e.to_string()))
}

impl PreparedChain {
    /// One step through the exact law of the estimator's sufficient statistic.
    fn sufficient_step(&self, theta: &ParamPoint, n: usize, rng: &mut Stream) -> Result<ParamPoint> {
        if let Validity::Invalid(reason) = self.family.validate_param(theta) {
            return Err(Error::ParameterDomain(reason));
        }
        let th = theta.values();
        let nf = n as f64;
        let values = match (self.family.spec(), &self.estimator.kind) {
            (FamilySpec::GaussianMean { .. }, kind) => {
                // weighted mean sum w_i x_i ~ N(theta (sum w_i), (sum w_i^2) Sigma)
                let (scale, shift) = match kind {
                    EstimatorKind::SampleMean => (1.0 / nf.sqrt(), 0.0),
                    EstimatorKind::PrefixMean { count } => {
                        if n < *count {
                            return Err(Error::InsufficientData(format!(
                                "prefix mean needs {count} rows, dataset has {n}"
                            )));
                        }
                        (1.0 / (*count as f64).sqrt(), 0.0)
                    }
                    EstimatorKind::BiasedMean { b } => (1.0 / nf.sqrt(), b / nf.sqrt()),
                    EstimatorKind::HarmonicWeightedMean => {
                        let h1: f64 = (1..=n).rev().map(|i| 1.0 / i as f64).sum();
                        let h2: f64 = (1..=n).rev().map(|i| 1.0 / (i as f64 * i as f64)).sum();
                        (h2.sqrt() / h1, 0.0)
                    }
                    _ => unreachable!("checked by has_sufficient_sampler"),
                };
                let z: Vec<f64> = (0..th.len()).map(|_| rng.sample(StandardNormal)).collect();
                let noise = self.family.correlate(&z);
                th.iter().zip(noise).map(|(m, e)| m + scale * e + shift).collect()
            }
            (FamilySpec::GaussianVariance { .. }, _) => {
                // sum (x_i - mu)^2 / theta ~ chi^2_n = 2 Gamma(n/2, 1)
                vec![th[0] * 2.0 * gamma_draw(nf / 2.0, 1.0, rng)? / nf]
            }
            (FamilySpec::ExponentialRate { .. }, _) => {
                // sum x_i ~ Gamma(n, 1/theta)
                th.iter()
                    .map(|rate| gamma_draw(nf, 1.0 / rate, rng).map(|s| nf / s))
                    .collect::<Result<_>>()?
            }
            (FamilySpec::GammaScale { shape }, EstimatorKind::GammaScaleMle { shape: k }) => {
                let k = k.unwrap_or(*shape);
                vec![gamma_draw(nf * shape, th[0], rng)? / (nf * k)]
            }
            (FamilySpec::UniformUpper { .. }, _) => {
                // max of n uniforms on (0, theta] is theta V^{1/n}, V in (0, 1]
                let v = 1.0 - rng.random::<f64>();
                vec![th[0] * v.powf(1.0 / nf)]
            }
            _ => unreachable!("checked by has_sufficient_sampler"),
        };
        Ok(ParamPoint::unchecked(values))
    }

    fn step(&self, theta: &ParamPoint, n: usize, rng: &mut Stream) -> Result<ParamPoint> {
        match self.sampling {
            SamplingMode::Full => {
                let data = self.family.sample(theta, n, rng)?;
                self.estimator.estimate(&data)
            }
            SamplingMode::Sufficient => self.sufficient_step(theta, n, rng),
        }
    }

    pub fn step_sizes(&self) -> &[usize] {
        &self.step_sizes
    }

    pub fn theta_star(&self) -> &ParamPoint {
        &self.theta_star
    }

    /// Runs the chain, handing each `(t, theta_t)` to `visit`.
    pub fn walk(&self, rng: &mut Stream, mut visit: impl FnMut(usize, &ParamPoint)) -> Option<ChainFailure> {
        let mut current = self.theta_star.clone();
        for (idx, &n) in self.step_sizes.iter().enumerate() {
            let step = idx + 1;
            let fail = |cause: String| Some(ChainFailure { step, cause });
            let next = match self.step(&current, n, rng) {
                Ok(theta) => theta,
                Err(e) => return fail(e.to_string()),
            };
            if let Some(v) = next.values().iter().find(|v| !v.is_finite() || v.abs() > DIVERGENCE_CAP) {
                return fail(format!("estimate diverged ({v})"));
            }
            if let Validity::Invalid(reason) = self.family.validate_param(&next) {
                return fail(format!("estimate left the parameter space: {reason}"));
            }
            visit(step, &next);
            current = next;
        }
        None
    }

    pub fn run(&self, rng: &mut Stream) -> Trajectory {
        let mut estimates: Vec<ParamPoint> = Vec::with_capacity(self.step_sizes.len());
        let failure = self.walk(rng, |_, theta| estimates.push(theta.clone()));
        let mut increments = Vec::with_capacity(estimates.len());
        let mut prev = &self.theta_star;
        for est in &estimates {
            increments.push(est.sub(prev));
            prev = est;
        }
        Trajectory {
            estimates,
            step_sizes: self.step_sizes.clone(),
            increments,
            failure,
        }
    }
}

/// Simulates one chain from `stream`.
pub fn run_chain(config: &ChainConfig, stream: &mut Stream) -> Result<Trajectory> {
    Ok(config.prepare()?.run(stream))
}

/// Whether generation `T` is strictly closer to `theta*` than generation 1.
/// `None` for chains that failed or are shorter than two steps.
pub fn improvement_indicator(trajectory: &Trajectory, theta_star: &ParamPoint) -> Option<bool> {
    if trajectory.failure.is_some() || trajectory.estimates.len() < 2 {
        return None;
    }
    let first = trajectory.estimates.first()?.distance(theta_star);
    let last = trajectory.estimates.last()?.distance(theta_star);
    Some(last < first)
}

/// Per-step metrics reported by [`run_monte_carlo`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `E |theta_t - theta*|^2`
    MeanSqError,
    /// `E |theta_t - theta*|`
    MeanError,
    /// `P(|theta_t - theta*| >= delta)`
    Exceedance,
    /// `P(theta_t <= epsilon)`, scalar chains only
    Diversity,
    /// `P(|theta_t - theta*| < |theta_1 - theta*|)`, `t >= 2`
    Improvement,
    /// `E max_i theta_{t,i}`
    MaxCoordinate,
    /// Fraction of chains failed at or before `t`
    FailureRate,
    /// `P(<theta_t - theta*, 1_p> > 0)`
    DriftAlignment,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::MeanSqError,
        Metric::MeanError,
        Metric::Exceedance,
        Metric::Diversity,
        Metric::Improvement,
        Metric::MaxCoordinate,
        Metric::FailureRate,
        Metric::DriftAlignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MeanSqError => "mean_sq_error",
            Metric::MeanError => "mean_error",
            Metric::Exceedance => "exceedance",
            Metric::Diversity => "diversity",
            Metric::Improvement => "improvement",
            Metric::MaxCoordinate => "max_coordinate",
            Metric::FailureRate => "failure_rate",
            Metric::DriftAlignment => "drift_alignment",
        }
    }

    pub fn is_probability(self) -> bool {
        !matches!(self, Metric::MeanSqError | Metric::MeanError | Metric::MaxCoordinate)
    }
}

/// One step of a metric series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub t: usize,
    pub value: f64,
    pub half_width: f64,
    /// Chains contributing to this point.
    pub count: u64,
    /// Chains excluded (failed before or at `t`).
    pub exclusions: u64,
}

impl MetricPoint {
    pub fn ci(&self, probability: bool) -> (f64, f64) {
        let (lo, hi) = (self.value - self.half_width, self.value + self.half_width);
        if probability {
            (lo.max(0.0), hi.min(1.0))
        } else {
            (lo, hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub metric: Metric,
    pub replications: usize,
    pub points: Vec<MetricPoint>,
}

impl MetricSeries {
    pub fn at(&self, t: usize) -> Option<&MetricPoint> {
        self.points.iter().find(|p| p.t == t)
    }

    pub fn ci_at(&self, t: usize) -> Option<(f64, f64)> {
        self.at(t).map(|p| p.ci(self.metric.is_probability()))
    }
}

/// Aggregated metrics over `R` replications of one chain configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub config: ChainConfig,
    pub replications: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub series: Vec<MetricSeries>,
}

impl ReplicationSummary {
    pub fn series(&self, metric: Metric) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == metric)
    }

    pub fn value(&self, metric: Metric, t: usize) -> Option<f64> {
        self.series(metric)?.at(t).map(|p| p.value)
    }
}

/// Batch settings for [`run_monte_carlo`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    pub replications: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub parallelism: usize,
    pub budget_cap: f64,
}

impl MonteCarloOptions {
    pub fn new(replications: usize) -> Self {
        Self {
            replications,
            delta: 1.0,
            epsilon: 0.05,
            parallelism: default_parallelism(),
            budget_cap: DEFAULT_BUDGET_CAP,
        }
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn parallelism(mut self, workers: usize) -> Self {
        self.parallelism = workers;
        self
    }

    pub fn budget_cap(mut self, cap: f64) -> Self {
        self.budget_cap = cap;
        self
    }
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Count, mean and centred second moment, merged with the pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    fn point(&self, t: usize, total: u64) -> MetricPoint {
        let half_width = if self.n > 1 {
            Z95 * (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
        } else {
            0.0
        };
        MetricPoint {
            t,
            value: if self.n > 0 { self.mean } else { f64::NAN },
            half_width,
            count: self.n,
            exclusions: total - self.n,
        }
    }
}

fn proportion(t: usize, hits: u64, n: u64, total: u64) -> MetricPoint {
    let (value, half_width) = if n == 0 {
        (f64::NAN, 0.0)
    } else {
        let p = hits as f64 / n as f64;
        (p, Z95 * (p * (1.0 - p) / n as f64).sqrt())
    };
    MetricPoint {
        t,
        value,
        half_width,
        count: n,
        exclusions: total - n,
    }
}

#[derive(Debug, Clone, Default)]
struct StepAcc {
    sq_err: Moments,
    err: Moments,
    max_coord: Moments,
    exceed: u64,
    diverse: u64,
    improved: u64,
    aligned: u64,
}

impl StepAcc {
    fn merge(&mut self, o: &StepAcc) {
        self.sq_err.merge(&o.sq_err);
        self.err.merge(&o.err);
        self.max_coord.merge(&o.max_coord);
        self.exceed += o.exceed;
        self.diverse += o.diverse;
        self.improved += o.improved;
        self.aligned += o.aligned;
    }
}

fn accumulate_block(chain: &PreparedChain, seed: u64, range: std::ops::Range<usize>, delta: f64, epsilon: f64) -> Vec<StepAcc> {
    let horizon = chain.step_sizes.len();
    let mut acc = vec![StepAcc::default(); horizon];
    let star = &chain.theta_star;
    let scalar = star.dim() == 1;
    for i in range {
        let mut stream = rng::split(seed, i as u64);
        let mut first_dist = 0.0;
        chain.walk(&mut stream, |t, theta| {
            let a = &mut acc[t - 1];
            let mut sq = 0.0;
            let mut along = 0.0;
            for (x, s) in theta.values().iter().zip(star.values()) {
                sq += (x - s) * (x - s);
                along += x - s;
            }
            let dist = sq.sqrt();
            a.sq_err.push(sq);
            a.err.push(dist);
            a.max_coord
                .push(theta.values().iter().copied().fold(f64::NEG_INFINITY, f64::max));
            a.exceed += (dist >= delta) as u64;
            a.aligned += (along > 0.0) as u64;
            if scalar {
                a.diverse += (theta.values()[0] <= epsilon) as u64;
            }
            if t == 1 {
                first_dist = dist;
            } else {
                a.improved += (dist < first_dist) as u64;
            }
        });
    }
    acc
}

/// Replicates a chain `R` times and aggregates per-step metrics.
///
/// Replication `i` uses `rng::split(base_seed, i)`. The work budget is checked
/// before anything runs.
pub fn run_monte_carlo(config: &ChainConfig, options: &MonteCarloOptions) -> Result<ReplicationSummary> {
    let reps = options.replications;
    if reps == 0 {
        return Err(Error::InvalidArgument("replications must be >= 1".into()));
    }
    if !(options.delta > 0.0) || !(options.epsilon > 0.0) {
        return Err(Error::InvalidArgument("delta and epsilon must be positive".into()));
    }
    let chain = config.prepare()?;
    let requested = reps as f64 * config.draws_per_chain()?;
    if requested > options.budget_cap {
        return Err(Error::Budget {
            requested,
            cap: options.budget_cap,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let blocks: Vec<std::ops::Range<usize>> = (0..reps)
        .step_by(BLOCK)
        .map(|start| start..(start + BLOCK).min(reps))
        .collect();
    let partials: Vec<Vec<StepAcc>> = pool.install(|| {
        blocks
            .into_par_iter()
            .map(|range| accumulate_block(&chain, config.base_seed, range, options.delta, options.epsilon))
            .collect()
    });
    let horizon = config.horizon;
    let mut total = vec![StepAcc::default(); horizon];
    for part in &partials {
        for (a, b) in total.iter_mut().zip(part) {
            a.merge(b);
        }
    }

    let r = reps as u64;
    let scalar = config.theta_star.dim() == 1;
    let mut series = Vec::new();
    for metric in Metric::ALL {
        if metric == Metric::Diversity && !scalar {
            continue;
        }
        let points: Vec<MetricPoint> = total
            .iter()
            .enumerate()
            .filter(|(idx, _)| metric != Metric::Improvement || *idx >= 1)
            .map(|(idx, a)| {
                let t = idx + 1;
                let alive = a.sq_err.n;
                match metric {
                    Metric::MeanSqError => a.sq_err.point(t, r),
                    Metric::MeanError => a.err.point(t, r),
                    Metric::MaxCoordinate => a.max_coord.point(t, r),
                    Metric::Exceedance => proportion(t, a.exceed, alive, r),
                    Metric::Diversity => proportion(t, a.diverse, alive, r),
                    Metric::Improvement => proportion(t, a.improved, alive, r),
                    Metric::DriftAlignment => proportion(t, a.aligned, alive, r),
                    Metric::FailureRate => {
                        let mut p = proportion(t, r - alive, r, r);
                        p.exclusions = 0;
                        p
                    }
                }
            })
            .collect();
        series.push(MetricSeries {
            metric,
            replications: reps,
            points,
        });
    }
    Ok(ReplicationSummary {
        config: config.clone(),
        replications: reps,
        delta: options.delta,
        epsilon: options.epsilon,
        series,
    })
}
