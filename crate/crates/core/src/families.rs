//! Parametric model families and their exact samplers.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in parameter space. Always non-empty and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("parameter point needs p >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ParameterDomain(format!("coordinate {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    /// Used by estimators that may legitimately produce non-finite values; the
    /// engine checks validity afterwards.
    pub(crate) fn unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &ParamPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &ParamPoint) -> ParamPoint {
        ParamPoint(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for ParamPoint {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamPoint::new(values)
    }
}

impl From<ParamPoint> for Vec<f64> {
    fn from(p: ParamPoint) -> Self {
        p.0
    }
}

fn one() -> usize {
    1
}

/// A parametric family `P_theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `N(theta, covariance)`; identity covariance when none is given.
    GaussianMean {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<Vec<f64>>>,
    },
    /// `N(mean, theta)` with `theta = sigma^2`.
    GaussianVariance {
        #[serde(default)]
        mean: f64,
    },
    /// Independent `Exp(rate = theta_i)` coordinates.
    #[serde(rename = "exponential")]
    ExponentialRate {
        #[serde(default = "one")]
        dim: usize,
    },
    /// `Gamma(shape, scale = theta)` with the shape fixed along a chain.
    #[serde(rename = "gamma")]
    GammaScale { shape: f64 },
    /// `Unif(0, theta)` with `theta` in `[1, cap]`.
    #[serde(rename = "uniform")]
    UniformUpper { cap: f64 },
    /// Labels `y ~ Bernoulli(sigmoid(theta . x))` with `x ~ N(0, I)`.
    #[serde(rename = "logistic")]
    LogisticRegression {
        #[serde(default = "one")]
        dim: usize,
    },
}

impl FamilySpec {
    pub fn gaussian_mean(dim: usize) -> Self {
        FamilySpec::GaussianMean {
            dim: Some(dim),
            covariance: None,
        }
    }

    pub fn gaussian_mean_with_covariance(covariance: Vec<Vec<f64>>) -> Self {
        FamilySpec::GaussianMean {
            dim: None,
            covariance: Some(covariance),
        }
    }

    /// Parameter dimension `p`.
    pub fn dim(&self) -> usize {
        match self {
            FamilySpec::GaussianMean { dim, covariance } => covariance
                .as_ref()
                .map(|c| c.len())
                .or(*dim)
                .unwrap_or(1),
            FamilySpec::GaussianVariance { .. }
            | FamilySpec::GammaScale { .. }
            | FamilySpec::UniformUpper { .. } => 1,
            FamilySpec::ExponentialRate { dim } | FamilySpec::LogisticRegression { dim } => *dim,
        }
    }

    /// Short name used in result files.
    pub fn label(&self) -> String {
        match self {
            FamilySpec::GaussianMean { covariance, .. } => {
                if covariance.is_some() {
                    format!("gaussian_mean(p={};cov)", self.dim())
                } else {
                    format!("gaussian_mean(p={})", self.dim())
                }
            }
            FamilySpec::GaussianVariance { mean } => format!("gaussian_variance(mu={mean})"),
            FamilySpec::ExponentialRate { dim } => format!("exponential(p={dim})"),
            FamilySpec::GammaScale { shape } => format!("gamma(k={shape})"),
            FamilySpec::UniformUpper { cap } => format!("uniform(M={cap})"),
            FamilySpec::LogisticRegression { dim } => format!("logistic(p={dim})"),
        }
    }

    /// Covariance matrix of a Gaussian-mean family (identity by default).
    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            FamilySpec::GaussianMean { covariance, .. } => Some(match covariance {
                Some(rows) => {
                    let p = rows.len();
                    DMatrix::from_fn(p, p, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
                }
                None => DMatrix::identity(self.dim(), self.dim()),
            }),
            _ => None,
        }
    }

    /// A default ground-truth parameter inside the family's space.
    pub fn default_theta(&self) -> ParamPoint {
        let p = self.dim();
        match self {
            FamilySpec::GaussianMean { .. } => ParamPoint::zeros(p),
            FamilySpec::GaussianVariance { .. }
            | FamilySpec::ExponentialRate { .. }
            | FamilySpec::GammaScale { .. } => ParamPoint(vec![1.0; p]),
            FamilySpec::UniformUpper { cap } => ParamPoint(vec![(1.0 + cap) / 2.0]),
            FamilySpec::LogisticRegression { .. } => ParamPoint(
                (0..p)
                    .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                    .collect(),
            ),
        }
    }

    /// Checks the family's own invariants (not a parameter).
    pub fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::GaussianMean { dim, covariance } => {
                if let Some(rows) = covariance {
                    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
                        return Err(Error::Config("covariance must be a square matrix".into()));
                    }
                    if let Some(d) = dim {
                        if *d != rows.len() {
                            return Err(Error::DimensionMismatch {
                                expected: *d,
                                got: rows.len(),
                            });
                        }
                    }
                    cholesky(&self.covariance_matrix().expect("gaussian"))?;
                } else if *dim == Some(0) {
                    return Err(Error::Config("dim must be >= 1".into()));
                }
            }
            FamilySpec::GaussianVariance { mean } => {
                if !mean.is_finite() {
                    return Err(Error::Config("mean must be finite".into()));
                }
            }
            FamilySpec::ExponentialRate { dim } | FamilySpec::LogisticRegression { dim } => {
                if *dim == 0 {
                    return Err(Error::Config("dim must be >= 1".into()));
                }
            }
            FamilySpec::GammaScale { shape } => {
                if !(shape.is_finite() && *shape > 0.0) {
                    return Err(Error::Config(format!("gamma shape must be > 0, got {shape}")));
                }
            }
            FamilySpec::UniformUpper { cap } => {
                if !(cap.is_finite() && *cap >= 1.0) {
                    return Err(Error::Config(format!("uniform cap M must be >= 1, got {cap}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Lower Cholesky factor, or `NotPositiveDefinite`.
pub(crate) fn cholesky(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let symmetric = (0..matrix.nrows()).all(|i| {
        (0..i).all(|j| {
            let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
            (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
        })
    });
    if !symmetric || matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    matrix
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// Outcome of [`validate_param`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(String),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Validity::Valid => None,
            Validity::Invalid(r) => Some(r),
        }
    }
}

/// Whether `theta` lies in the family's parameter space.
pub fn validate_param(family: &FamilySpec, theta: &ParamPoint) -> Validity {
    if theta.dim() != family.dim() {
        return Validity::Invalid(format!(
            "dimension {} does not match family dimension {}",
            theta.dim(),
            family.dim()
        ));
    }
    if let Some(i) = theta.values().iter().position(|v| !v.is_finite()) {
        return Validity::Invalid(format!("coordinate {i} is not finite"));
    }
    let x = theta.values();
    match family {
        FamilySpec::GaussianMean { .. } | FamilySpec::LogisticRegression { .. } => Validity::Valid,
        FamilySpec::GaussianVariance { .. } => {
            if x[0] > 0.0 {
                Validity::Valid
            } else {
                Validity::Invalid("variance must be positive".into())
            }
        }
        FamilySpec::ExponentialRate { .. } => {
            if x.iter().all(|&r| r > 0.0) {
                Validity::Valid
            } else {
                Validity::Invalid("rate must be positive".into())
            }
        }
        FamilySpec::GammaScale { .. } => {
            if x[0] > 0.0 {
                Validity::Valid
            } else {
                Validity::Invalid("scale must be positive".into())
            }
        }
        FamilySpec::UniformUpper { cap } => {
            if x[0] < 1.0 {
                Validity::Invalid("below lower bound 1".into())
            } else if x[0] > *cap {
                Validity::Invalid(format!("above upper bound M = {cap}"))
            } else {
                Validity::Valid
            }
        }
    }
}

/// Observations drawn from one family, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>, labels: Option<Vec<bool>>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.len() / dim {
                return Err(Error::InvalidArgument("one label per row required".into()));
            }
        }
        Ok(Self { dim, values, labels })
    }

    /// Scalar observations.
    pub fn from_scalars(values: Vec<f64>) -> Self {
        Self {
            dim: 1,
            values,
            labels: None,
        }
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }
}

/// A validated family with sampling state prepared once per chain.
#[derive(Debug, Clone)]
pub struct Family {
    spec: FamilySpec,
    chol: Option<DMatrix<f64>>,
    identity_cov: bool,
}

impl Family {
    pub fn new(spec: FamilySpec) -> Result<Self> {
        spec.validate()?;
        let (chol, identity_cov) = match &spec {
            FamilySpec::GaussianMean { covariance, .. } => {
                let cov = spec.covariance_matrix().expect("gaussian");
                (Some(cholesky(&cov)?), covariance.is_none())
            }
            _ => (None, false),
        };
        Ok(Self {
            spec,
            chol,
            identity_cov,
        })
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn validate_param(&self, theta: &ParamPoint) -> Validity {
        validate_param(&self.spec, theta)
    }

    /// `L z` for the Gaussian-mean covariance factor `L`; `z` itself otherwise.
    pub(crate) fn correlate(&self, z: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(l) if !self.identity_cov => (0..z.len())
                .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
                .collect(),
            _ => z.to_vec(),
        }
    }

    /// Random numbers consumed per observation (for work budgeting).
    pub fn draws_per_observation(&self) -> usize {
        match &self.spec {
            FamilySpec::LogisticRegression { dim } => dim + 1,
            _ => self.dim(),
        }
    }

    /// `n` i.i.d. draws from `P_theta`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: &ParamPoint, n: usize, rng: &mut R) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Validity::Invalid(reason) = self.validate_param(theta) {
            return Err(Error::ParameterDomain(reason));
        }
        let th = theta.values();
        let p = self.dim();
        let dataset = match &self.spec {
            FamilySpec::GaussianMean { .. } => {
                let mut values = Vec::with_capacity(n * p);
                if p == 1 {
                    let scale = self.chol.as_ref().expect("factor")[(0, 0)];
                    values.extend((0..n).map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        th[0] + scale * z
                    }));
                } else if self.identity_cov {
                    for _ in 0..n {
                        values.extend(th.iter().map(|m| {
                            let z: f64 = StandardNormal.sample(rng);
                            m + z
                        }));
                    }
                } else {
                    let l = self.chol.as_ref().expect("factor");
                    let mut z = vec![0.0; p];
                    for _ in 0..n {
                        z.iter_mut().for_each(|zi| *zi = StandardNormal.sample(rng));
                        for i in 0..p {
                            let mut x = th[i];
                            for (j, zj) in z.iter().enumerate().take(i + 1) {
                                x += l[(i, j)] * zj;
                            }
                            values.push(x);
                        }
                    }
                }
                Dataset::new(p, values, None)?
            }
            FamilySpec::GaussianVariance { mean } => {
                let sd = th[0].sqrt();
                Dataset::from_scalars(
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            mean + sd * z
                        })
                        .collect(),
                )
            }
            FamilySpec::ExponentialRate { .. } => {
                let mut values = Vec::with_capacity(n * p);
                for _ in 0..n {
                    values.extend(th.iter().map(|rate| {
                        let e: f64 = Exp1.sample(rng);
                        e / rate
                    }));
                }
                Dataset::new(p, values, None)?
            }
            FamilySpec::GammaScale { shape } => {
                let law = Gamma::new(*shape, th[0])
                    .map_err(|e| Error::ParameterDomain(e.to_string()))?;
                Dataset::from_scalars((0..n).map(|_| law.sample(rng)).collect())
            }
            FamilySpec::UniformUpper { .. } => {
                // 1 - U with U in [0, 1) lands in (0, 1]
                Dataset::from_scalars(
                    (0..n)
                        .map(|_| th[0] * (1.0 - rng.random::<f64>()))
                        .collect(),
                )
            }
            FamilySpec::LogisticRegression { .. } => {
                let mut values = Vec::with_capacity(n * p);
                let mut labels = Vec::with_capacity(n);
                for _ in 0..n {
                    let start = values.len();
                    values.extend((0..p).map(|_| -> f64 { StandardNormal.sample(rng) }));
                    let eta: f64 = values[start..].iter().zip(th).map(|(x, t)| x * t).sum();
                    labels.push(rng.random::<f64>() < sigmoid(eta));
                }
                Dataset::new(p, values, Some(labels))?
            }
        };
        Ok(dataset)
    }
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `n` i.i.d. draws from `P_theta` for a family spec. Prepares the sampler on
/// every call; chains should hold a [`Family`] instead.
pub fn sample_dataset<R: Rng + ?Sized>(
    family: &FamilySpec,
    theta: &ParamPoint,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    Family::new(family.clone())?.sample(theta, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn mean_var(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
        let v: Vec<f64> = xs.collect();
        let n = v.len();
        let m = v.iter().sum::<f64>() / n as f64;
        let s2 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        (m, s2, n)
    }

    #[test]
    fn validate_param_reasons() {
        let uni = FamilySpec::UniformUpper { cap: 10.0 };
        let v = validate_param(&uni, &ParamPoint::scalar(0.5).unwrap());
        assert_eq!(v.reason(), Some("below lower bound 1"));
        assert!(validate_param(&uni, &ParamPoint::scalar(10.0).unwrap()).is_valid());
        assert!(!validate_param(&uni, &ParamPoint::scalar(10.5).unwrap()).is_valid());

        let var = FamilySpec::GaussianVariance { mean: 0.0 };
        assert!(validate_param(&var, &ParamPoint::scalar(1.0).unwrap()).is_valid());
        assert!(!validate_param(&var, &ParamPoint::scalar(0.0).unwrap()).is_valid());

        let exp = FamilySpec::ExponentialRate { dim: 1 };
        let v = validate_param(&exp, &ParamPoint::scalar(-1.0).unwrap());
        assert_eq!(v.reason(), Some("rate must be positive"));

        let v = validate_param(&FamilySpec::gaussian_mean(2), &ParamPoint::zeros(3));
        assert!(v.reason().unwrap().contains("dimension"));
    }

    #[test]
    fn sampling_errors() {
        let mut r = rng::stream(1);
        let exp = Family::new(FamilySpec::ExponentialRate { dim: 1 }).unwrap();
        assert_eq!(
            exp.sample(&ParamPoint::scalar(1.0).unwrap(), 0, &mut r),
            Err(Error::EmptyDataset)
        );
        assert!(matches!(
            exp.sample(&ParamPoint::scalar(-1.0).unwrap(), 5, &mut r),
            Err(Error::ParameterDomain(_))
        ));
    }

    #[test]
    fn rejects_non_spd_covariance() {
        let bad = FamilySpec::gaussian_mean_with_covariance(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(Family::new(bad).unwrap_err(), Error::NotPositiveDefinite);
        let asym = FamilySpec::gaussian_mean_with_covariance(vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert_eq!(Family::new(asym).unwrap_err(), Error::NotPositiveDefinite);
        assert!(Family::new(FamilySpec::UniformUpper { cap: 0.5 }).is_err());
        assert!(Family::new(FamilySpec::GammaScale { shape: 0.0 }).is_err());
    }

    #[test]
    fn gaussian_mean_law_of_large_numbers() {
        let fam = Family::new(FamilySpec::gaussian_mean(1)).unwrap();
        let mut r = rng::stream(3);
        let d = fam.sample(&ParamPoint::zeros(1), 3, &mut r).unwrap();
        assert_eq!(d.n(), 3);
        let d = fam.sample(&ParamPoint::zeros(1), 1_000_000, &mut r).unwrap();
        let mean = d.values().iter().sum::<f64>() / d.n() as f64;
        assert!(mean.abs() < 5e-3, "{mean}");
    }

    #[test]
    fn uniform_support_and_max() {
        let fam = Family::new(FamilySpec::UniformUpper { cap: 10.0 }).unwrap();
        let mut r = rng::stream(4);
        let d = fam.sample(&ParamPoint::scalar(2.0).unwrap(), 100_000, &mut r).unwrap();
        assert!(d.values().iter().all(|&x| x > 0.0 && x <= 2.0));
        let max = d.values().iter().cloned().fold(f64::MIN, f64::max);
        assert!(2.0 - max < 1e-3, "{max}");
    }

    #[test]
    fn exponential_mean() {
        let fam = Family::new(FamilySpec::ExponentialRate { dim: 1 }).unwrap();
        let mut r = rng::stream(5);
        let d = fam.sample(&ParamPoint::scalar(1.0).unwrap(), 1_000_000, &mut r).unwrap();
        let mean = d.values().iter().sum::<f64>() / d.n() as f64;
        assert!((mean - 1.0).abs() < 3e-3, "{mean}");
        assert!(d.values().iter().all(|&x| x > 0.0));
    }

    /// Empirical mean and variance within 4 standard errors of the analytic
    /// moments, for every scalar family.
    #[test]
    fn moment_checks_per_family() {
        let n = 1_000_000;
        // (family, theta, mean, variance, fourth central moment)
        let cases: Vec<(FamilySpec, f64, f64, f64, f64)> = vec![
            (FamilySpec::gaussian_mean(1), 0.3, 0.3, 1.0, 3.0),
            (FamilySpec::GaussianVariance { mean: 1.0 }, 2.0, 1.0, 2.0, 12.0),
            (FamilySpec::ExponentialRate { dim: 1 }, 2.0, 0.5, 0.25, 9.0 / 16.0),
            (FamilySpec::GammaScale { shape: 2.0 }, 1.5, 3.0, 4.5, 3.0 * 2.0 * 4.0 * 1.5f64.powi(4)),
            (FamilySpec::GammaScale { shape: 0.5 }, 1.0, 0.5, 0.5, 3.0 * 0.5 * 2.5),
            (FamilySpec::UniformUpper { cap: 10.0 }, 4.0, 2.0, 16.0 / 12.0, 256.0 / 80.0),
        ];
        for (i, (spec, theta, mean, var, mu4)) in cases.into_iter().enumerate() {
            let fam = Family::new(spec.clone()).unwrap();
            let mut r = rng::split(99, i as u64);
            let d = fam.sample(&ParamPoint::scalar(theta).unwrap(), n, &mut r).unwrap();
            let (m, s2, _) = mean_var(d.values().iter().copied());
            let se_mean = (var / n as f64).sqrt();
            let se_var = ((mu4 - var * var) / n as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se_mean, "{spec}: mean {m} vs {mean}");
            assert!((s2 - var).abs() < 4.0 * se_var, "{spec}: var {s2} vs {var}");
        }
    }

    #[test]
    fn gaussian_covariance_converges() {
        for p in [2usize, 4, 8] {
            let cov: Vec<Vec<f64>> = (0..p)
                .map(|i| {
                    (0..p)
                        .map(|j| 0.5f64.powi((i as i32 - j as i32).abs()))
                        .collect()
                })
                .collect();
            let spec = FamilySpec::gaussian_mean_with_covariance(cov.clone());
            let fam = Family::new(spec).unwrap();
            let mut r = rng::stream(11 + p as u64);
            let n = 1_000_000;
            let d = fam.sample(&ParamPoint::zeros(p), n, &mut r).unwrap();
            let mut acc = vec![0.0; p * p];
            for row in d.rows() {
                for i in 0..p {
                    for j in 0..p {
                        acc[i * p + j] += row[i] * row[j];
                    }
                }
            }
            let frob: f64 = (0..p * p)
                .map(|k| {
                    let e = acc[k] / n as f64 - cov[k / p][k % p];
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            assert!(frob < 1e-2, "p={p}: frobenius error {frob}");
        }
    }

    #[test]
    fn logistic_labels_follow_sigmoid() {
        let theta = ParamPoint::new(vec![1.0, -0.5]).unwrap();
        let fam = Family::new(FamilySpec::LogisticRegression { dim: 2 }).unwrap();
        let mut r = rng::stream(21);
        let n = 200_000;
        let d = fam.sample(&theta, n, &mut r).unwrap();
        let labels = d.labels().unwrap();
        let mut scored: Vec<(f64, bool)> = d
            .rows()
            .zip(labels)
            .map(|(x, &y)| (x[0] - 0.5 * x[1], y))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for decile in scored.chunks(n / 10) {
            let freq = decile.iter().filter(|(_, y)| *y).count() as f64 / decile.len() as f64;
            let expected =
                decile.iter().map(|(e, _)| sigmoid(*e)).sum::<f64>() / decile.len() as f64;
            let se = (expected * (1.0 - expected) / decile.len() as f64).sqrt();
            assert!((freq - expected).abs() < 3.0 * se, "{freq} vs {expected}");
        }
    }

    #[test]
    fn equal_seeds_give_identical_datasets() {
        for spec in [
            FamilySpec::gaussian_mean(3),
            FamilySpec::GammaScale { shape: 2.0 },
            FamilySpec::LogisticRegression { dim: 2 },
        ] {
            let fam = Family::new(spec.clone()).unwrap();
            let theta = spec.default_theta();
            let a = fam.sample(&theta, 1000, &mut rng::stream(8)).unwrap();
            let b = fam.sample(&theta, 1000, &mut rng::stream(8)).unwrap();
            let bits = |d: &Dataset| d.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
            assert_eq!(a.labels(), b.labels());
        }
    }

    #[test]
    fn family_spec_json_is_strict() {
        let f: FamilySpec = serde_json::from_str(r#"{"kind":"exponential"}"#).unwrap();
        assert_eq!(f, FamilySpec::ExponentialRate { dim: 1 });
        let f: FamilySpec = serde_json::from_str(r#"{"kind":"gamma","shape":2}"#).unwrap();
        assert_eq!(f, FamilySpec::GammaScale { shape: 2.0 });
        assert!(serde_json::from_str::<FamilySpec>(r#"{"kind":"gamma","shape":2,"x":1}"#).is_err());
    }
}
