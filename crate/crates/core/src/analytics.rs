//! Closed forms, bounds and limiting values for recursive training chains.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::{RateKind, TailBoundSpec};
use crate::families::{cholesky, sigmoid, FamilySpec, ParamPoint, Validity};
use crate::rng::Stream;
use crate::schedules::{Horizon, ScheduleSpec, SeriesLimit};
use crate::special::{digamma, ln_gamma, normal_cdf};

/// Normal quantile for two-sided 95% intervals.
const Z95: f64 = 1.96;

/// Per-coordinate `E(theta_T - theta*)^2` of the Gaussian mean chain,
/// `(1 + sum_{t=1}^{T-1} 1/c_t) / n0`.
pub fn gaussian_mean_mse(n0: usize, schedule: &ScheduleSpec, horizon: Horizon) -> Result<f64> {
    if n0 == 0 {
        return Err(Error::InvalidArgument("n0 must be >= 1".into()));
    }
    if horizon == Horizon::Finite(0) {
        return Err(Error::InvalidArgument("T must be >= 1".into()));
    }
    match schedule.inverse_sum_at(horizon)? {
        SeriesLimit::Converged(v) => Ok((1.0 + v) / n0 as f64),
        SeriesLimit::Diverged => Err(Error::Divergent(format!(
            "sum of 1/c_t diverges for {schedule}"
        ))),
    }
}

/// `[(1 + 2/n)^T - 1] sigma^4` for the known-mean variance chain.
pub fn variance_chain_risk(n: usize, horizon: usize, sigma_sq: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("variance chain needs n >= 2".into()));
    }
    Ok((horizon as f64 * (2.0 / n as f64).ln_1p()).exp_m1() * sigma_sq * sigma_sq)
}

/// `ln(n/2) - psi(n/2)`, the per-step downward drift of `ln sigma_t^2`.
pub fn variance_chain_log_drift(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("variance chain needs n >= 2".into()));
    }
    let half = n as f64 / 2.0;
    Ok(half.ln() - digamma(half))
}

/// Monte Carlo estimate of the improvement probability `P(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementEstimate {
    pub value: f64,
    pub half_width: f64,
    pub draws: usize,
    pub covariance: DMatrix<f64>,
    pub v: f64,
}

/// Standard-normal vectors reused across configurations so that comparisons
/// between them share Monte Carlo noise.
#[derive(Debug, Clone)]
pub struct SharedDraws {
    dim: usize,
    z: Vec<f64>,
}

impl SharedDraws {
    pub fn new(dim: usize, draws: usize, rng: &mut Stream) -> Result<Self> {
        if dim == 0 || draws == 0 {
            return Err(Error::InvalidArgument("shared draws need dim >= 1 and draws >= 1".into()));
        }
        Ok(Self {
            dim,
            z: (0..dim * draws).map(|_| rng.sample(StandardNormal)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn draws(&self) -> usize {
        self.z.len() / self.dim
    }

    fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.z.chunks_exact(self.dim)
    }
}

fn mean_and_half_width(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    let hw = if n > 1 {
        Z95 * (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    (mean, hw, n)
}

fn check_dims(covariance: &DMatrix<f64>, shared: &SharedDraws) -> Result<()> {
    if covariance.nrows() != shared.dim() || covariance.ncols() != shared.dim() {
        return Err(Error::DimensionMismatch {
            expected: shared.dim(),
            got: covariance.nrows(),
        });
    }
    Ok(())
}

/// For `X = sqrt(v) L z` with `L L^T = Sigma`, the ratio
/// `|X| / (2 |Sigma^{1/2} X/|X||) = sqrt(v) |u|^2 / (2 sqrt(u^T Sigma u))` with `u = L z`.
fn improvement_ratio(l: &DMatrix<f64>, cov: &DMatrix<f64>, v: f64, z: &[f64], u: &mut [f64]) -> f64 {
    let p = z.len();
    for i in 0..p {
        u[i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
    }
    let norm_sq: f64 = u.iter().map(|x| x * x).sum();
    let mut quad = 0.0;
    for i in 0..p {
        for j in 0..p {
            quad += u[i] * cov[(i, j)] * u[j];
        }
    }
    v.sqrt() * norm_sq / (2.0 * quad.sqrt())
}

/// `P(T) = E[Phi(-|X| / (2 |Sigma^{1/2} X~|))]`, `X ~ N(0, v Sigma)`, over shared draws.
pub fn improvement_probability_shared(covariance: &DMatrix<f64>, v: f64, shared: &SharedDraws) -> Result<ImprovementEstimate> {
    check_dims(covariance, shared)?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("v must be a finite nonnegative number, got {v}")));
    }
    let l = cholesky(covariance)?;
    if v == 0.0 {
        return Ok(ImprovementEstimate {
            value: 0.5,
            half_width: 0.0,
            draws: shared.draws(),
            covariance: covariance.clone(),
            v,
        });
    }
    let mut u = vec![0.0; shared.dim()];
    let (value, half_width, draws) = mean_and_half_width(
        shared
            .rows()
            .map(|z| normal_cdf(-improvement_ratio(&l, covariance, v, z, &mut u))),
    );
    Ok(ImprovementEstimate {
        value,
        half_width,
        draws,
        covariance: covariance.clone(),
        v,
    })
}

/// [`improvement_probability_shared`] with fresh draws from `rng`.
pub fn improvement_probability(covariance: &DMatrix<f64>, v: f64, draws: usize, rng: &mut Stream) -> Result<ImprovementEstimate> {
    let shared = SharedDraws::new(covariance.nrows(), draws, rng)?;
    improvement_probability_shared(covariance, v, &shared)
}

/// Eigenvalue bracket `E[Phi(-|X|/(2 lambda))]` at the extreme eigenvalues of `Sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBracket {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub at_lambda_min: f64,
    pub at_lambda_max: f64,
}

impl EigenBracket {
    /// Whether `value` lies between the two expectations, in either order.
    pub fn contains(&self, value: f64) -> bool {
        let lo = self.at_lambda_min.min(self.at_lambda_max);
        let hi = self.at_lambda_min.max(self.at_lambda_max);
        (lo..=hi).contains(&value)
    }
}

pub fn eigen_bracket(covariance: &DMatrix<f64>, v: f64, shared: &SharedDraws) -> Result<EigenBracket> {
    check_dims(covariance, shared)?;
    let l = cholesky(covariance)?;
    let eig = covariance.clone().symmetric_eigen().eigenvalues;
    let lambda_min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p = shared.dim();
    let mut u = vec![0.0; p];
    let mut sum_min = 0.0;
    let mut sum_max = 0.0;
    for z in shared.rows() {
        for i in 0..p {
            u[i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
        }
        let norm_x = v.sqrt() * u.iter().map(|x| x * x).sum::<f64>().sqrt();
        sum_min += normal_cdf(-norm_x / (2.0 * lambda_min));
        sum_max += normal_cdf(-norm_x / (2.0 * lambda_max));
    }
    let n = shared.draws() as f64;
    Ok(EigenBracket {
        lambda_min,
        lambda_max,
        at_lambda_min: sum_min / n,
        at_lambda_max: sum_max / n,
    })
}

/// Bounds on `P(T)` for identity covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityBounds {
    pub lower: f64,
    /// Clamped to 1; `None` for `p = 1`, where the formula is undefined.
    pub upper: Option<f64>,
    pub upper_unclamped: Option<f64>,
}

/// `lower = Phi(-sqrt(v p)/2)` and
/// `upper = sqrt(pi) Gamma((p-1)/2) / (2^{(p-1)/2} v^{p/2} Gamma(p/2)) (8v/(v+4))^{(p-1)/2}`.
pub fn improvement_bounds_identity(v: f64, p: usize) -> Result<IdentityBounds> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("v must be positive, got {v}")));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    let pf = p as f64;
    let lower = normal_cdf(-(v * pf).sqrt() / 2.0);
    let upper_unclamped = (p >= 2).then(|| {
        let h = (pf - 1.0) / 2.0;
        let ln = 0.5 * std::f64::consts::PI.ln() + ln_gamma(h)
            - h * 2f64.ln()
            - pf / 2.0 * v.ln()
            - ln_gamma(pf / 2.0)
            + h * (8.0 * v / (v + 4.0)).ln();
        ln.exp()
    });
    Ok(IdentityBounds {
        lower,
        upper: upper_unclamped.map(|u| u.min(1.0)),
        upper_unclamped,
    })
}

/// Union bound on `P(|theta_T - theta*| > delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnionTailBound {
    /// `min(1, raw)`; exactly 1 when the series diverges.
    pub bound: f64,
    /// `c1 * sum of terms`; infinite when the series diverges.
    pub raw: f64,
    pub diverged: bool,
    /// Terms summed explicitly.
    pub terms: usize,
    /// Partition normalizer actually used (an upper bound on `C(s)`).
    pub normalizer: f64,
}

/// Explicit terms used when bounding the partition normalizer.
const NORMALIZER_TERMS: u64 = 1_000_000;
/// Terms beyond which an infinite union series is declared divergent.
const MAX_UNION_TERMS: usize = 10_000_000;
/// Absolute tail error allowed when truncating an infinite series.
const UNION_TAIL_TOL: f64 = 1e-12;

/// Upper bound on `C(s) = sum_{t >= 1} ln(1+t)^q / t^{1+s}` with `q = 1/gamma`.
///
/// Explicit terms up to `N - 1`, then `g(N) + int_N^inf g` for the decreasing
/// tail, with `ln(1+x) <= ln(2x)` and
/// `int_N^inf ln(2x)^q x^{-1-s} dx = 2^s s^{-q-1} Gamma(q+1, s ln 2N)`
/// bounded by `Gamma(a, x) <= x^{a-1} e^{-x} / (1 - (a-1)/x)`.
pub fn partition_normalizer(s: f64, gamma: f64) -> f64 {
    let q = 1.0 / gamma;
    let g = |t: f64| (1.0 + t).ln().powf(q) * t.powf(-1.0 - s);
    let explicit: f64 = (1..NORMALIZER_TERMS).rev().map(|t| g(t as f64)).sum();
    let big_n = NORMALIZER_TERMS as f64;
    let x = s * (2.0 * big_n).ln();
    let incomplete = if x > q {
        x.powf(q) * (-x).exp() / (1.0 - q / x)
    } else {
        crate::special::gamma(q + 1.0)
    };
    explicit + g(big_n) + 2f64.powf(s) * s.powf(-q - 1.0) * incomplete
}

/// Union bound over the increments with partition
/// `delta_t = delta / (2 C) * ln(1+t)^{1/gamma} / t^{1+s}`.
///
/// Term `t` bounds the step-`t` increment, estimated from `n_{t-1} = c_{t-1} n0`
/// samples (`c_0 = 1`): `exp(-c2 n_{t-1}^kappa delta_t^gamma)`.
pub fn union_tail_bound(
    tail: &TailBoundSpec,
    schedule: &ScheduleSpec,
    n0: usize,
    delta: f64,
    s: f64,
    horizon: Horizon,
) -> Result<UnionTailBound> {
    if tail.rate != RateKind::Power {
        return Err(Error::Unsupported("union bound needs a power-rate tail r(n) = n^kappa".into()));
    }
    if n0 == 0 || !(delta > 0.0) || !(s > 0.0) {
        return Err(Error::InvalidArgument("union bound needs n0 >= 1, delta > 0, s > 0".into()));
    }
    schedule.validate()?;
    let normalizer = partition_normalizer(s, tail.gamma);
    let q = 1.0 / tail.gamma;
    let scale = delta / (2.0 * normalizer);
    let c_prev = |t: usize| -> Result<f64> {
        if t == 1 {
            Ok(1.0)
        } else {
            schedule.coefficient(t - 1)
        }
    };
    // exponent E_t = c2 (c_{t-1} n0)^kappa delta_t^gamma
    let exponent = |t: usize| -> Result<f64> {
        let tf = t as f64;
        let delta_t = scale * (1.0 + tf).ln().powf(q) / tf.powf(1.0 + s);
        Ok(tail.c2 * (c_prev(t)? * n0 as f64).powf(tail.kappa) * delta_t.powf(tail.gamma))
    };
    let diverged = |terms| UnionTailBound {
        bound: 1.0,
        raw: f64::INFINITY,
        diverged: true,
        terms,
        normalizer,
    };
    let finish = |sum: f64, terms| {
        let raw = tail.c1 * sum;
        UnionTailBound {
            bound: raw.min(1.0),
            raw,
            diverged: false,
            terms,
            normalizer,
        }
    };
    match horizon {
        Horizon::Finite(t_max) => {
            let mut sum = 0.0;
            for t in 1..=t_max {
                sum += (-exponent(t)?).exp();
            }
            Ok(finish(sum, t_max))
        }
        Horizon::Infinite => {
            let growth = match schedule {
                ScheduleSpec::Constant { .. } => return Ok(diverged(0)),
                ScheduleSpec::Polynomial { a } => a * tail.kappa - tail.gamma * (1.0 + s),
                ScheduleSpec::Geometric { .. } => f64::INFINITY,
                ScheduleSpec::Explicit { .. } => {
                    return Err(Error::Unsupported("explicit schedules have no infinite horizon".into()))
                }
            };
            if growth < 0.0 {
                return Ok(diverged(0));
            }
            // With E_t = g(t) ln(1+t) and g nondecreasing for t >= 2, the tail
            // beyond N is at most int_N^inf (1+x)^{-g(N)} dx = (1+N)^{1-g(N)} / (g(N)-1).
            let mut sum = 0.0;
            let mut t = 1usize;
            loop {
                let e = exponent(t)?;
                sum += (-e).exp();
                if t >= 2 {
                    let g = e / (1.0 + t as f64).ln();
                    if g > 1.0 {
                        let tail_mass = ((1.0 - g) * (1.0 + t as f64).ln()).exp() / (g - 1.0);
                        if tail.c1 * tail_mass < UNION_TAIL_TOL {
                            return Ok(finish(sum, t));
                        }
                    }
                }
                if t >= MAX_UNION_TERMS {
                    return Ok(diverged(t));
                }
                t += 1;
            }
        }
    }
}

/// `min(1, exp(p - n0 delta^2 / sum_{t<T} 1/c_t))` with `c_0 = 1`.
pub fn sharp_gaussian_bound(n0: usize, schedule: &ScheduleSpec, horizon: Horizon, delta: f64, p: usize) -> Result<f64> {
    if horizon == Horizon::Finite(0) {
        return Err(Error::InvalidArgument("T must be >= 1".into()));
    }
    let total = match schedule.inverse_sum_at(horizon)? {
        SeriesLimit::Converged(v) => 1.0 + v,
        SeriesLimit::Diverged => return Ok(1.0),
    };
    Ok((p as f64 - n0 as f64 * delta * delta / total).exp().min(1.0))
}

/// Where an asymptotic covariance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoSource {
    ClosedForm,
    MonteCarlo { draws: usize },
}

/// Asymptotic covariance `Sigma(theta)` of `sqrt(n) (theta_hat - theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub covariance: DMatrix<f64>,
    pub source: InfoSource,
}

/// Asymptotic covariance of the family's maximum-likelihood estimator, i.e.
/// the inverse Fisher information.
pub fn fisher_information(family: &FamilySpec, theta: &ParamPoint, draws: usize, rng: &mut Stream) -> Result<FisherInfo> {
    family.validate()?;
    if let Validity::Invalid(reason) = crate::families::validate_param(family, theta) {
        return Err(Error::ParameterDomain(reason));
    }
    let p = family.dim();
    let (covariance, source) = match family {
        FamilySpec::GaussianMean { .. } => (family.covariance_matrix().expect("gaussian"), InfoSource::ClosedForm),
        FamilySpec::ExponentialRate { .. } => (
            DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(p, theta.values().iter().map(|t| t * t))),
            InfoSource::ClosedForm,
        ),
        FamilySpec::LogisticRegression { .. } => {
            if draws == 0 {
                return Err(Error::InvalidArgument("draws must be >= 1".into()));
            }
            let mut info = DMatrix::<f64>::zeros(p, p);
            let mut x = vec![0.0; p];
            for _ in 0..draws {
                x.iter_mut().for_each(|xi| *xi = rng.sample(StandardNormal));
                let eta: f64 = x.iter().zip(theta.values()).map(|(a, b)| a * b).sum();
                let m = sigmoid(eta);
                let w = m * (1.0 - m);
                for i in 0..p {
                    for j in 0..p {
                        info[(i, j)] += w * x[i] * x[j];
                    }
                }
            }
            info /= draws as f64;
            let eig = info.clone().symmetric_eigen().eigenvalues;
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let max = eig.iter().copied().fold(0.0, f64::max);
            if !(min > 1e-12 * max.max(f64::MIN_POSITIVE)) {
                return Err(Error::SingularInformation { min_eigenvalue: min });
            }
            let inv = info
                .try_inverse()
                .ok_or(Error::SingularInformation { min_eigenvalue: min })?;
            // symmetrize away rounding from the inverse
            let sym = (&inv + inv.transpose()) * 0.5;
            (sym, InfoSource::MonteCarlo { draws })
        }
        other => {
            return Err(Error::Unsupported(format!(
                "no asymptotic covariance available for {other}"
            )))
        }
    };
    Ok(FisherInfo { covariance, source })
}

/// Limit of `P(T)` as `n0 -> inf` with `Sigma = Sigma(theta*)` and
/// `v = inverse_coefficient_sum(T)`.
pub fn improvement_probability_asymptotic(
    family: &FamilySpec,
    theta_star: &ParamPoint,
    schedule: &ScheduleSpec,
    horizon: usize,
    draws: usize,
    rng: &mut Stream,
) -> Result<ImprovementEstimate> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("T must be >= 1".into()));
    }
    let info = fisher_information(family, theta_star, draws, rng)?;
    let v = schedule.inverse_coefficient_sum(horizon)?;
    improvement_probability(&info.covariance, v, draws, rng)
}
