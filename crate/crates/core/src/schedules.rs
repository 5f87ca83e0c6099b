//! Sample-size schedules `n_t = ceil(c_t n0)` and the scalars derived from them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{BiasSpec, RateKind, TailBoundSpec};
use crate::special;

/// Multiplier sequence `c_t` for steps `t >= 1`; step 0 always uses `c_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { c: f64 },
    /// `c_t = t^a`
    Polynomial { a: f64 },
    /// `c_t = b^t`
    Geometric { b: f64 },
    /// `c_t = values[t - 1]`
    Explicit { values: Vec<f64> },
}

/// Number of steps: finite `T` or the `T -> infinity` limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "{t}"),
            Horizon::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Horizon {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Horizon::Infinite),
            _ => s
                .parse::<usize>()
                .map(Horizon::Finite)
                .map_err(|_| Error::InvalidArgument(format!("horizon must be an integer or `inf`, got `{s}`"))),
        }
    }
}

/// Value of an infinite series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesLimit {
    Converged(f64),
    Diverged,
}

impl SeriesLimit {
    pub fn value(self) -> Option<f64> {
        match self {
            SeriesLimit::Converged(v) => Some(v),
            SeriesLimit::Diverged => None,
        }
    }
}

/// Relative slack when snapping `c_t n0` to an integer before the ceiling, so
/// that `2^1.1 * 100` style products are not pushed up by representation error.
const CEIL_SNAP: f64 = 1e-9;

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        match self {
            ScheduleSpec::Constant { c } if !(c.is_finite() && *c >= 1.0) => {
                bad(format!("constant schedule needs c >= 1, got {c}"))
            }
            ScheduleSpec::Polynomial { a } if !(a.is_finite() && *a > 0.0) => {
                bad(format!("polynomial schedule needs a > 0, got {a}"))
            }
            ScheduleSpec::Geometric { b } if !(b.is_finite() && *b > 1.0) => {
                bad(format!("geometric schedule needs b > 1, got {b}"))
            }
            ScheduleSpec::Explicit { values } => {
                if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 1.0)) {
                    bad(format!("explicit coefficient c_{} = {v} must be >= 1", i + 1))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Short name used in result files.
    pub fn label(&self) -> String {
        match self {
            ScheduleSpec::Constant { c } => format!("constant({c})"),
            ScheduleSpec::Polynomial { a } => format!("polynomial({a})"),
            ScheduleSpec::Geometric { b } => format!("geometric({b})"),
            ScheduleSpec::Explicit { values } => format!("explicit(len={})", values.len()),
        }
    }

    /// `c_t` for `t >= 1`.
    pub fn coefficient(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::ScheduleIndex);
        }
        Ok(match self {
            ScheduleSpec::Constant { c } => *c,
            ScheduleSpec::Polynomial { a } => (t as f64).powf(*a),
            ScheduleSpec::Geometric { b } => b.powf(t as f64),
            ScheduleSpec::Explicit { values } => *values.get(t - 1).ok_or(Error::ScheduleTooShort {
                len: values.len(),
                needed: t,
            })?,
        })
    }

    /// `n_t = ceil(c_t n0)`.
    pub fn sample_size(&self, t: usize, n0: usize) -> Result<usize> {
        let product = self.coefficient(t)? * n0 as f64;
        let nearest = product.round();
        let value = if (product - nearest).abs() <= CEIL_SNAP * nearest.max(1.0) {
            nearest
        } else {
            product.ceil()
        };
        // 2^53 keeps the count exactly representable
        if !value.is_finite() || value > (1u64 << 53) as f64 || value > usize::MAX as f64 {
            return Err(Error::ScheduleOverflow { t });
        }
        Ok(value as usize)
    }

    /// `[n_0, n_1, ..., n_{T-1}]` with `n_0 = n0`.
    pub fn step_sizes(&self, n0: usize, horizon: usize) -> Result<Vec<usize>> {
        let mut sizes = Vec::with_capacity(horizon);
        if horizon > 0 {
            sizes.push(n0);
        }
        for t in 1..horizon {
            sizes.push(self.sample_size(t, n0)?);
        }
        Ok(sizes)
    }

    fn ensure_length(&self, horizon: usize) -> Result<()> {
        if let ScheduleSpec::Explicit { values } = self {
            if horizon > 0 && values.len() < horizon - 1 {
                return Err(Error::ScheduleTooShort {
                    len: values.len(),
                    needed: horizon - 1,
                });
            }
        }
        Ok(())
    }

    /// `v = sum_{t=1}^{T-1} 1 / c_t` (zero for `T <= 1`).
    pub fn inverse_coefficient_sum(&self, horizon: usize) -> Result<f64> {
        self.ensure_length(horizon)?;
        if let ScheduleSpec::Constant { c } = self {
            return Ok(horizon.saturating_sub(1) as f64 / c);
        }
        (1..horizon).rev().map(|t| self.coefficient(t).map(|c| 1.0 / c)).sum()
    }

    /// `lim_{T -> inf} inverse_coefficient_sum(T)`.
    pub fn inverse_coefficient_limit(&self) -> Result<SeriesLimit> {
        match self {
            ScheduleSpec::Constant { .. } => Ok(SeriesLimit::Diverged),
            ScheduleSpec::Polynomial { a } if *a <= 1.0 => Ok(SeriesLimit::Diverged),
            ScheduleSpec::Polynomial { a } => Ok(SeriesLimit::Converged(special::zeta(*a))),
            ScheduleSpec::Geometric { b } => Ok(SeriesLimit::Converged(1.0 / (b - 1.0))),
            ScheduleSpec::Explicit { .. } => Err(Error::Unsupported(
                "explicit schedules have no infinite horizon".into(),
            )),
        }
    }

    /// `inverse_coefficient_sum` at a finite or infinite horizon.
    pub fn inverse_sum_at(&self, horizon: Horizon) -> Result<SeriesLimit> {
        match horizon {
            Horizon::Finite(t) => self.inverse_coefficient_sum(t).map(SeriesLimit::Converged),
            Horizon::Infinite => self.inverse_coefficient_limit(),
        }
    }

    /// `r_T = sum_{t<T} c_t^{-1/2} / sqrt(sum_{t<T} c_t^{-1})` with `c_0 = 1`.
    pub fn drift_ratio(&self, horizon: usize) -> Result<f64> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("drift ratio needs T >= 1".into()));
        }
        self.ensure_length(horizon)?;
        let mut root_sum = 0.0;
        let mut inv_sum = 0.0;
        for t in (1..horizon).rev() {
            let c = self.coefficient(t)?;
            root_sum += c.sqrt().recip();
            inv_sum += c.recip();
        }
        Ok((1.0 + root_sum) / (1.0 + inv_sum).sqrt())
    }

    /// `lim_{T -> inf} r_T`, diverging exactly when `sum c_t^{-1/2}` does.
    pub fn drift_ratio_limit(&self) -> Result<SeriesLimit> {
        match self {
            ScheduleSpec::Constant { .. } => Ok(SeriesLimit::Diverged),
            ScheduleSpec::Polynomial { a } if *a <= 2.0 => Ok(SeriesLimit::Diverged),
            ScheduleSpec::Polynomial { a } => Ok(SeriesLimit::Converged(
                (1.0 + special::zeta(a / 2.0)) / (1.0 + special::zeta(*a)).sqrt(),
            )),
            ScheduleSpec::Geometric { b } => {
                let rb = b.sqrt();
                Ok(SeriesLimit::Converged((rb / (rb - 1.0)) / (b / (b - 1.0)).sqrt()))
            }
            ScheduleSpec::Explicit { .. } => Err(Error::Unsupported(
                "explicit schedules have no infinite horizon".into(),
            )),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Which argument yields the schedule requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseRegime {
    /// Unbiased increments with `kappa >= gamma / 2`: martingale argument.
    Martingale,
    /// `rho >= 1` with `kappa >= gamma / 2`.
    SmallBias,
    /// `kappa / gamma <= rho < 1`.
    LargeBias,
    /// Union bound over increments, used when `kappa < gamma / 2`.
    UnionBound,
}

/// Polynomial schedules `c_t = t^a` prevent collapse when `a > exponent`.
/// Multiplicative constants in `c_t` are not part of the requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseThreshold {
    pub regime: CollapseRegime,
    pub exponent: f64,
}

impl CollapseThreshold {
    pub fn is_sufficient(&self, a: f64) -> bool {
        a > self.exponent
    }
}

/// Minimum polynomial exponent that prevents collapse for an estimator.
pub fn collapse_threshold(tail: &TailBoundSpec, bias: &BiasSpec) -> Result<CollapseThreshold> {
    if tail.rate != RateKind::Power {
        return Err(Error::Unsupported(
            "collapse threshold needs a power-rate tail bound r(n) = n^kappa".into(),
        ));
    }
    let ratio = tail.kappa / tail.gamma;
    if let BiasSpec::Biased { rho, .. } = bias {
        if *rho < ratio {
            return Err(Error::InconsistentBias { rho: *rho, ratio });
        }
    }
    let threshold = if tail.kappa >= tail.gamma / 2.0 {
        match bias {
            BiasSpec::Unbiased => CollapseThreshold {
                regime: CollapseRegime::Martingale,
                exponent: 1.0,
            },
            BiasSpec::Biased { rho, .. } if *rho >= 1.0 => CollapseThreshold {
                regime: CollapseRegime::SmallBias,
                exponent: 1.0,
            },
            BiasSpec::Biased { rho, .. } => CollapseThreshold {
                regime: CollapseRegime::LargeBias,
                exponent: 1.0 / rho,
            },
        }
    } else {
        CollapseThreshold {
            regime: CollapseRegime::UnionBound,
            exponent: tail.gamma / tail.kappa,
        }
    };
    Ok(threshold)
}
