//! Estimation schemes `M(D)` with tail-bound and bias metadata.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{sigmoid, Dataset, FamilySpec, ParamPoint};

/// How the rate sequence `r(n)` of a tail bound grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// `r(n) = n^kappa`
    Power,
    /// `r(n) = (ln n)^kappa`
    Logarithmic,
}

/// Uniform tail bound `P(|M(D) - theta| >= delta) <= c1 exp(-c2 r(n) delta^gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundSpec {
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub rate: RateKind,
}

impl TailBoundSpec {
    pub fn new(c1: f64, c2: f64, kappa: f64, gamma: f64, rate: RateKind) -> Result<Self> {
        for (name, v) in [("c1", c1), ("c2", c2), ("kappa", kappa), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("tail constant {name} must be > 0, got {v}")));
            }
        }
        Ok(Self { c1, c2, kappa, gamma, rate })
    }

    /// `r(n)` as a real number.
    pub fn rate_at(&self, n: f64) -> f64 {
        match self.rate {
            RateKind::Power => n.powf(self.kappa),
            RateKind::Logarithmic => n.ln().max(0.0).powf(self.kappa),
        }
    }

    /// `min(1, c1 exp(-c2 r(n) delta^gamma))`.
    pub fn bound(&self, n: f64, delta: f64) -> f64 {
        (self.c1 * (-self.c2 * self.rate_at(n) * delta.powf(self.gamma)).exp()).min(1.0)
    }
}

/// Bias order: `|E M(D) - theta|_i <= v_i / n^rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasSpec {
    Unbiased,
    Biased { rho: f64, v: Vec<f64> },
}

impl BiasSpec {
    pub fn is_unbiased(&self) -> bool {
        matches!(self, BiasSpec::Unbiased)
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            BiasSpec::Unbiased => None,
            BiasSpec::Biased { rho, .. } => Some(*rho),
        }
    }
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-8
}

fn default_offset() -> f64 {
    1.0
}

/// The estimation scheme itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorKind {
    SampleMean,
    /// Sample mean of the first `count` rows; the remaining rows are ignored.
    PrefixMean { count: usize },
    HarmonicWeightedMean,
    MaxObservation,
    ExponentialMle,
    GammaScaleMle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<f64>,
    },
    VarianceKnownMean {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
    },
    BiasedMean {
        #[serde(default = "default_offset")]
        b: f64,
    },
    LogisticMle {
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

impl EstimatorKind {
    /// Parses a bare name as used in config files (`"exp_mle"`, `"sample_mean"`, ...).
    pub fn from_name(name: &str) -> Result<Self> {
        let kind = match name {
            "sample_mean" | "mean" => EstimatorKind::SampleMean,
            "harmonic_weighted_mean" => EstimatorKind::HarmonicWeightedMean,
            "max_observation" | "max" => EstimatorKind::MaxObservation,
            "exponential_mle" | "exp_mle" => EstimatorKind::ExponentialMle,
            "gamma_scale_mle" | "gamma_mle" => EstimatorKind::GammaScaleMle { shape: None },
            "variance_known_mean" | "variance_mle" => EstimatorKind::VarianceKnownMean { mu: None },
            "biased_mean" => EstimatorKind::BiasedMean { b: 1.0 },
            "logistic_mle" => EstimatorKind::LogisticMle {
                max_iter: default_max_iter(),
                tol: default_tol(),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown estimator `{other}` (known: sample_mean, harmonic_weighted_mean, \
                     max_observation, exp_mle, gamma_mle, variance_mle, biased_mean, logistic_mle; \
                     prefix_mean needs {{\"kind\":\"prefix_mean\",\"count\":N}})"
                )))
            }
        };
        Ok(kind)
    }

    /// Maximum-likelihood (or natural) estimator for a family.
    pub fn default_for(family: &FamilySpec) -> Self {
        match family {
            FamilySpec::GaussianMean { .. } => EstimatorKind::SampleMean,
            FamilySpec::GaussianVariance { .. } => EstimatorKind::VarianceKnownMean { mu: None },
            FamilySpec::ExponentialRate { .. } => EstimatorKind::ExponentialMle,
            FamilySpec::GammaScale { .. } => EstimatorKind::GammaScaleMle { shape: None },
            FamilySpec::UniformUpper { .. } => EstimatorKind::MaxObservation,
            FamilySpec::LogisticRegression { .. } => EstimatorKind::LogisticMle {
                max_iter: default_max_iter(),
                tol: default_tol(),
            },
        }
    }
}

/// An estimator bound to a family, with its tail and bias metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub tail: Option<TailBoundSpec>,
    pub bias: BiasSpec,
}

impl EstimatorSpec {
    /// Checks compatibility with `family` and attaches metadata. Parameters
    /// left unset in `kind` (gamma shape, known mean) are taken from the family.
    pub fn for_family(kind: EstimatorKind, family: &FamilySpec) -> Result<Self> {
        let incompatible = || Error::Incompatible {
            estimator: kind_name(&kind).to_string(),
            family: family.label(),
        };
        let p = family.dim() as f64;
        let kind = match (&kind, family) {
            (
                EstimatorKind::SampleMean
                | EstimatorKind::PrefixMean { .. }
                | EstimatorKind::HarmonicWeightedMean
                | EstimatorKind::BiasedMean { .. },
                FamilySpec::GaussianMean { .. },
            ) => kind.clone(),
            (EstimatorKind::MaxObservation, FamilySpec::UniformUpper { .. }) => kind.clone(),
            (EstimatorKind::ExponentialMle, FamilySpec::ExponentialRate { .. }) => kind.clone(),
            (EstimatorKind::GammaScaleMle { shape }, FamilySpec::GammaScale { shape: k }) => {
                EstimatorKind::GammaScaleMle {
                    shape: Some(shape.unwrap_or(*k)),
                }
            }
            (EstimatorKind::VarianceKnownMean { mu }, FamilySpec::GaussianVariance { mean }) => {
                EstimatorKind::VarianceKnownMean {
                    mu: Some(mu.unwrap_or(*mean)),
                }
            }
            (EstimatorKind::LogisticMle { .. }, FamilySpec::LogisticRegression { .. }) => kind.clone(),
            _ => return Err(incompatible()),
        };
        match &kind {
            EstimatorKind::PrefixMean { count } if *count == 0 => {
                return Err(Error::Config("prefix_mean count must be >= 1".into()))
            }
            EstimatorKind::BiasedMean { b } if !(b.is_finite() && *b >= 0.0) => {
                return Err(Error::Config(format!("biased_mean offset b must be >= 0, got {b}")))
            }
            EstimatorKind::GammaScaleMle { shape: Some(k) } if !(k.is_finite() && *k > 0.0) => {
                return Err(Error::Config(format!("gamma shape must be > 0, got {k}")))
            }
            EstimatorKind::LogisticMle { max_iter, tol } if *max_iter == 0 || !(*tol > 0.0) => {
                return Err(Error::Config("logistic_mle needs max_iter >= 1 and tol > 0".into()))
            }
            _ => {}
        }

        let power = |c1, c2, kappa, gamma| TailBoundSpec {
            c1,
            c2,
            kappa,
            gamma,
            rate: RateKind::Power,
        };
        let dim = family.dim();
        let (tail, bias) = match &kind {
            EstimatorKind::SampleMean => (Some(power((p / 2.0).exp(), 0.25, 1.0, 2.0)), BiasSpec::Unbiased),
            EstimatorKind::PrefixMean { .. } => (None, BiasSpec::Unbiased),
            EstimatorKind::HarmonicWeightedMean => (
                Some(TailBoundSpec {
                    c1: 2.0,
                    c2: 3.0 / (std::f64::consts::PI * std::f64::consts::PI),
                    kappa: 2.0,
                    gamma: 2.0,
                    rate: RateKind::Logarithmic,
                }),
                BiasSpec::Unbiased,
            ),
            EstimatorKind::MaxObservation => {
                let cap = match family {
                    FamilySpec::UniformUpper { cap } => *cap,
                    _ => unreachable!(),
                };
                // E[max] = n theta / (n + 1), so the bias is theta / (n + 1) <= M / n
                (
                    Some(power(1.0, 1.0 / cap, 1.0, 1.0)),
                    BiasSpec::Biased { rho: 1.0, v: vec![cap] },
                )
            }
            // sub-Gaussian rate with nominal constants; only kappa and gamma
            // enter the collapse threshold
            EstimatorKind::ExponentialMle => (
                Some(power(2.0, 0.25, 1.0, 2.0)),
                BiasSpec::Biased { rho: 1.0, v: vec![2.0; dim] },
            ),
            EstimatorKind::GammaScaleMle { .. } | EstimatorKind::VarianceKnownMean { .. } => {
                (None, BiasSpec::Unbiased)
            }
            EstimatorKind::BiasedMean { b } => (
                Some(power((p / 2.0).exp(), 0.25, 1.0, 2.0)),
                if *b == 0.0 {
                    BiasSpec::Unbiased
                } else {
                    BiasSpec::Biased { rho: 0.5, v: vec![*b; dim] }
                },
            ),
            EstimatorKind::LogisticMle { .. } => (None, BiasSpec::Biased { rho: 1.0, v: vec![1.0; dim] }),
        };
        Ok(Self { kind, tail, bias })
    }

    /// The family's default estimator with metadata.
    pub fn default_for(family: &FamilySpec) -> Result<Self> {
        Self::for_family(EstimatorKind::default_for(family), family)
    }

    /// Short name used in result files.
    pub fn label(&self) -> String {
        match &self.kind {
            EstimatorKind::PrefixMean { count } => format!("prefix_mean({count})"),
            EstimatorKind::BiasedMean { b } => format!("biased_mean(b={b})"),
            EstimatorKind::GammaScaleMle { shape: Some(k) } => format!("gamma_scale_mle(k={k})"),
            EstimatorKind::VarianceKnownMean { mu: Some(m) } => format!("variance_known_mean(mu={m})"),
            other => kind_name(other).to_string(),
        }
    }

    /// Minimum dataset size the scheme needs.
    pub fn min_rows(&self) -> usize {
        match self.kind {
            EstimatorKind::PrefixMean { count } => count,
            _ => 1,
        }
    }

    /// `M(data)`.
    pub fn estimate(&self, data: &Dataset) -> Result<ParamPoint> {
        estimate(self, data)
    }

    /// `min(1, c1 exp(-c2 r(n) delta^gamma))`, or `None` without tail metadata.
    pub fn tail_bound(&self, n: usize, delta: f64) -> Option<f64> {
        self.tail.map(|t| t.bound(n as f64, delta))
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn kind_name(kind: &EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::SampleMean => "sample_mean",
        EstimatorKind::PrefixMean { .. } => "prefix_mean",
        EstimatorKind::HarmonicWeightedMean => "harmonic_weighted_mean",
        EstimatorKind::MaxObservation => "max_observation",
        EstimatorKind::ExponentialMle => "exponential_mle",
        EstimatorKind::GammaScaleMle { .. } => "gamma_scale_mle",
        EstimatorKind::VarianceKnownMean { .. } => "variance_known_mean",
        EstimatorKind::BiasedMean { .. } => "biased_mean",
        EstimatorKind::LogisticMle { .. } => "logistic_mle",
    }
}

/// Tail bound of an estimator at sample size `n`; `None` when the scheme
/// carries no tail metadata.
pub fn tail_bound(spec: &EstimatorSpec, n: usize, delta: f64) -> Option<f64> {
    spec.tail_bound(n, delta)
}

fn column_means(data: &Dataset, rows: usize) -> Vec<f64> {
    let p = data.dim();
    let mut acc = vec![0.0; p];
    for row in data.rows().take(rows) {
        acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
    }
    acc.iter_mut().for_each(|a| *a /= rows as f64);
    acc
}

/// `M(data)` for the given scheme.
pub fn estimate(spec: &EstimatorSpec, data: &Dataset) -> Result<ParamPoint> {
    let n = data.n();
    if n == 0 {
        return Err(Error::InsufficientData("dataset is empty".into()));
    }
    let values = match &spec.kind {
        EstimatorKind::SampleMean => column_means(data, n),
        EstimatorKind::PrefixMean { count } => {
            if n < *count {
                return Err(Error::InsufficientData(format!(
                    "prefix mean needs {count} rows, dataset has {n}"
                )));
            }
            column_means(data, *count)
        }
        EstimatorKind::HarmonicWeightedMean => {
            let p = data.dim();
            let harmonic: f64 = (1..=n).rev().map(|j| 1.0 / j as f64).sum();
            let mut acc = vec![0.0; p];
            for (i, row) in data.rows().enumerate() {
                let w = 1.0 / (i + 1) as f64;
                acc.iter_mut().zip(row).for_each(|(a, x)| *a += w * x);
            }
            acc.into_iter().map(|a| a / harmonic).collect()
        }
        EstimatorKind::MaxObservation => {
            vec![data.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)]
        }
        EstimatorKind::ExponentialMle => {
            let means = column_means(data, n);
            if let Some(i) = means.iter().position(|&m| m <= 0.0) {
                return Err(Error::DegenerateData(format!(
                    "coordinate {i} has non-positive sample mean"
                )));
            }
            means.into_iter().map(|m| 1.0 / m).collect()
        }
        EstimatorKind::GammaScaleMle { shape } => {
            let k = shape.ok_or_else(|| Error::Config("gamma shape unresolved".into()))?;
            column_means(data, n).into_iter().map(|m| m / k).collect()
        }
        EstimatorKind::VarianceKnownMean { mu } => {
            let mu = mu.ok_or_else(|| Error::Config("known mean unresolved".into()))?;
            vec![data.values().iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64]
        }
        EstimatorKind::BiasedMean { b } => {
            let shift = b / (n as f64).sqrt();
            column_means(data, n).into_iter().map(|m| m + shift).collect()
        }
        EstimatorKind::LogisticMle { max_iter, tol } => {
            return logistic_mle(data, *max_iter, *tol).map(|fit| ParamPoint::unchecked(fit.theta))
        }
    };
    Ok(ParamPoint::unchecked(values))
}

/// Result of a logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub theta: Vec<f64>,
    pub iterations: usize,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean log-likelihood of a logistic model.
fn log_likelihood(data: &Dataset, labels: &[bool], theta: &[f64]) -> f64 {
    let n = data.n() as f64;
    data.rows()
        .zip(labels)
        .map(|(x, &y)| {
            let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
            if y {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum::<f64>()
        / n
}

fn separates(data: &Dataset, labels: &[bool], theta: &[f64]) -> bool {
    data.rows().zip(labels).all(|(x, &y)| {
        let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        if y {
            eta > 0.0
        } else {
            eta < 0.0
        }
    })
}

/// Damped Newton (IRLS) for logistic regression without intercept.
///
/// Stops when the gradient of the mean log-likelihood has norm below `tol`.
/// A fit whose linear predictor classifies every row correctly is reported as
/// separation, since the likelihood then has no finite maximizer.
pub fn logistic_mle(data: &Dataset, max_iter: usize, tol: f64) -> Result<LogisticFit> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::InsufficientData("logistic fit needs labelled rows".into()))?;
    let n = data.n();
    if n == 0 {
        return Err(Error::InsufficientData("dataset is empty".into()));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::Separation { iterations: 0 });
    }
    let p = data.dim();
    let mut theta = vec![0.0; p];
    let mut current = log_likelihood(data, labels, &theta);
    for iter in 1..=max_iter {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (x, &y) in data.rows().zip(labels) {
            let eta: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let resid = if y { 1.0 - mu } else { -mu };
            let w = mu * (1.0 - mu);
            for i in 0..p {
                grad[i] += resid * x[i];
                for j in 0..=i {
                    hess[(i, j)] += w * x[i] * x[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                hess[(j, i)] = hess[(i, j)];
            }
        }
        grad /= n as f64;
        hess /= n as f64;
        if grad.norm() < tol {
            if separates(data, labels, &theta) {
                return Err(Error::Separation { iterations: iter });
            }
            return Ok(LogisticFit { theta, iterations: iter });
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                // flat likelihood: fall back to a ridge-regularized step
                let ridge = hess + DMatrix::identity(p, p) * 1e-8;
                match ridge.cholesky() {
                    Some(c) => c.solve(&grad),
                    None => grad.clone(),
                }
            }
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let value = log_likelihood(data, labels, &trial);
            if value >= current {
                theta = trial;
                current = value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || theta.iter().any(|t| !t.is_finite()) {
            break;
        }
    }
    if separates(data, labels, &theta) {
        Err(Error::Separation { iterations: max_iter })
    } else {
        Err(Error::Convergence { iterations: max_iter })
    }
}
