//! Monte Carlo laboratory for recursive self-training of parametric models.
//!
//! A chain starts from `n0` real observations drawn at `theta*`, fits an
//! estimator, samples `n_t = ceil(c_t n0)` synthetic observations from the fit,
//! refits, and so on. The crate simulates such chains, aggregates replicated
//! metrics with confidence intervals, and evaluates the matching closed forms.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cli;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod families;
pub mod rng;
pub mod schedules;
pub mod special;

pub use error::{Error, Result};
pub use estimators::{BiasSpec, EstimatorKind, EstimatorSpec, RateKind, TailBoundSpec};
pub use families::{Dataset, Family, FamilySpec, ParamPoint, Validity};
pub use schedules::{Horizon, ScheduleSpec, SeriesLimit};
