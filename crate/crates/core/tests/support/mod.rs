//! Property checks shared by the `properties` and `acceptance` targets.
//!
//! Each check drives a proptest runner and returns the first counterexample
//! as an error message.

#![allow(dead_code)]

use collapse_lab::analytics::{improvement_probability_shared, SharedDraws};
use collapse_lab::cli::export::summary_rows;
use collapse_lab::engine::{run_chain, run_monte_carlo, ChainConfig, MonteCarloOptions, SamplingMode};
use collapse_lab::families::sample_dataset;
use collapse_lab::rng;
use collapse_lab::schedules::{collapse_threshold, SeriesLimit};
use collapse_lab::{BiasSpec, EstimatorKind, EstimatorSpec, FamilySpec, ParamPoint, RateKind, ScheduleSpec, TailBoundSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn schedule_strategy() -> impl Strategy<Value = ScheduleSpec> {
    prop_oneof![
        (1.0f64..6.0).prop_map(|c| ScheduleSpec::Constant { c }),
        (0.1f64..3.5).prop_map(|a| ScheduleSpec::Polynomial { a }),
        (1.01f64..2.5).prop_map(|b| ScheduleSpec::Geometric { b }),
        prop::collection::vec(1.0f64..20.0, 40..60).prop_map(|values| ScheduleSpec::Explicit { values }),
    ]
}

/// Small chain configurations across families, estimators and schedules.
pub fn chain_strategy() -> impl Strategy<Value = ChainConfig> {
    let family = prop_oneof![
        (1usize..4).prop_map(FamilySpec::gaussian_mean),
        Just(FamilySpec::GaussianVariance { mean: 0.0 }),
        (1usize..3).prop_map(|dim| FamilySpec::ExponentialRate { dim }),
        (0.5f64..4.0).prop_map(|shape| FamilySpec::GammaScale { shape }),
        Just(FamilySpec::UniformUpper { cap: 10.0 }),
    ];
    let schedule = prop_oneof![
        (1.0f64..3.0).prop_map(|c| ScheduleSpec::Constant { c }),
        (0.5f64..2.0).prop_map(|a| ScheduleSpec::Polynomial { a }),
    ];
    (family, schedule, 10usize..40, 1usize..10, any::<u64>(), any::<bool>()).prop_map(
        |(family, schedule, n0, horizon, base_seed, biased)| {
            let kind = match (&family, biased) {
                (FamilySpec::GaussianMean { .. }, true) => EstimatorKind::BiasedMean { b: 1.0 },
                _ => EstimatorKind::default_for(&family),
            };
            let sampling = if biased && !matches!(family, FamilySpec::UniformUpper { .. }) {
                SamplingMode::Sufficient
            } else {
                SamplingMode::Full
            };
            ChainConfig {
                estimator: EstimatorSpec::for_family(kind, &family).expect("compatible estimator"),
                theta_star: family.default_theta(),
                family,
                schedule,
                n0,
                horizon,
                base_seed,
                sampling,
            }
        },
    )
}

/// `c_t >= 1`, `n_t >= c_t n0 >= n0` and ceiling rounding.
pub fn schedule_coefficients(cases: u32) -> Result<(), String> {
    run(cases, (schedule_strategy(), 1usize..40, 1usize..5000), |(s, t, n0)| {
        let c = s.coefficient(t).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(c >= 1.0, "{s}: c_{t} = {c}");
        let n = match s.sample_size(t, n0) {
            Ok(n) => n,
            Err(collapse_lab::Error::ScheduleOverflow { .. }) => {
                prop_assume!(false);
                unreachable!()
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(n >= n0);
        prop_assert!(n as f64 >= c * n0 as f64 * (1.0 - 1e-9), "{s}: n_{t} = {n} < {c} * {n0}");
        prop_assert!((n as f64) < c * n0 as f64 + 1.0 + 1e-6);
        Ok(())
    })
}

/// `v(T)` is nondecreasing and below its limit; the limit exists iff `a > 1`.
pub fn inverse_sum_monotone(cases: u32) -> Result<(), String> {
    run(cases, (0.2f64..4.0, 1usize..3000, 1usize..3000), |(a, t1, t2)| {
        let s = ScheduleSpec::Polynomial { a };
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let v_lo = s.inverse_coefficient_sum(lo).unwrap();
        let v_hi = s.inverse_coefficient_sum(hi).unwrap();
        prop_assert!(v_lo <= v_hi);
        match s.inverse_coefficient_limit().unwrap() {
            SeriesLimit::Converged(limit) => {
                prop_assert!(a > 1.0);
                prop_assert!(v_hi <= limit + 1e-9, "a = {a}: v({hi}) = {v_hi} > {limit}");
            }
            SeriesLimit::Diverged => prop_assert!(a <= 1.0),
        }
        Ok(())
    })
}

/// `r_T` stays below its finite limit when `a > 2`; for `a <= 2` the limit is
/// reported divergent and `r_T` keeps growing.
pub fn drift_ratio_phase(cases: u32) -> Result<(), String> {
    run(cases, (1.05f64..4.0, 2usize..5000), |(a, t)| {
        let s = ScheduleSpec::Polynomial { a };
        let r = s.drift_ratio(t).unwrap();
        let r_next = s.drift_ratio(2 * t).unwrap();
        prop_assert!(r >= 1.0);
        match s.drift_ratio_limit().unwrap() {
            SeriesLimit::Converged(limit) => {
                prop_assert!(a > 2.0, "a = {a} reported bounded");
                prop_assert!(r <= limit + 1e-9, "a = {a}: r_{t} = {r} > {limit}");
            }
            SeriesLimit::Diverged => {
                prop_assert!(a <= 2.0, "a = {a} reported unbounded");
                prop_assert!(r_next > r, "a = {a}: r_{} = {r_next} <= r_{t} = {r}", 2 * t);
            }
        }
        Ok(())
    })
}

/// The threshold depends on `(kappa, gamma, rho)` only.
pub fn threshold_scale_invariance(cases: u32) -> Result<(), String> {
    let strategy = (
        0.5f64..3.0,
        0.5f64..3.0,
        prop::option::of(0.05f64..2.0),
        (0.01f64..100.0, 0.01f64..100.0),
        (0.01f64..100.0, 0.01f64..100.0),
    );
    run(cases, strategy, |(kappa, gamma, rho, (c1a, c2a), (c1b, c2b))| {
        let bias = match rho {
            Some(rho) => BiasSpec::Biased { rho, v: vec![1.0] },
            None => BiasSpec::Unbiased,
        };
        let a = TailBoundSpec::new(c1a, c2a, kappa, gamma, RateKind::Power).unwrap();
        let b = TailBoundSpec::new(c1b, c2b, kappa, gamma, RateKind::Power).unwrap();
        let ta = collapse_threshold(&a, &bias).map(|t| (t.regime, t.exponent)).map_err(|e| e.to_string());
        let tb = collapse_threshold(&b, &bias).map(|t| (t.regime, t.exponent)).map_err(|e| e.to_string());
        prop_assert_eq!(ta, tb);
        Ok(())
    })
}

/// Tail bounds lie in `[0, 1]` and do not increase with `n` or `delta`.
pub fn tail_bound_monotone(cases: u32) -> Result<(), String> {
    let strategy = (0.1f64..20.0, 0.01f64..5.0, 0.3f64..3.0, 0.5f64..3.0, 1usize..10_000, 1usize..10_000, 0.01f64..3.0, 0.01f64..3.0);
    run(cases, strategy, |(c1, c2, kappa, gamma, n1, n2, d1, d2)| {
        for rate in [RateKind::Power, RateKind::Logarithmic] {
            let tail = TailBoundSpec::new(c1, c2, kappa, gamma, rate).unwrap();
            let (na, nb) = (n1.min(n2) as f64, n1.max(n2) as f64);
            let (da, db) = (d1.min(d2), d1.max(d2));
            let b = tail.bound(na, da);
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!(tail.bound(nb, da) <= b);
            prop_assert!(tail.bound(na, db) <= b);
        }
        Ok(())
    })
}

/// `theta_T - theta* = sum_t xi_t` for every chain, failed or not.
pub fn telescoping(cases: u32) -> Result<(), String> {
    run(cases, chain_strategy(), |cfg| {
        let traj = run_chain(&cfg, &mut rng::split(cfg.base_seed, 0)).unwrap();
        prop_assert_eq!(traj.estimates.len(), traj.increments.len());
        let residual = traj.telescoping_residual(&cfg.theta_star);
        prop_assert!(residual < 1e-12, "{}: residual {residual}", cfg.family);
        Ok(())
    })
}

/// Replication summaries are identical across worker counts.
pub fn determinism_across_workers(cases: u32) -> Result<(), String> {
    run(cases, (chain_strategy(), 1usize..700), |(cfg, reps)| {
        let summaries: Vec<String> = [1usize, 4, 8]
            .iter()
            .map(|&w| {
                let s = run_monte_carlo(&cfg, &MonteCarloOptions::new(reps).parallelism(w)).unwrap();
                // Debug formatting compares floats exactly and treats NaN as equal
                format!("{:?}", s.series)
            })
            .collect();
        prop_assert_eq!(&summaries[0], &summaries[1]);
        prop_assert_eq!(&summaries[0], &summaries[2]);
        Ok(())
    })
}

/// Equal seeds give bitwise-identical datasets.
pub fn dataset_determinism(cases: u32) -> Result<(), String> {
    let family = prop_oneof![
        (1usize..5).prop_map(FamilySpec::gaussian_mean),
        Just(FamilySpec::GaussianVariance { mean: 1.0 }),
        (1usize..3).prop_map(|dim| FamilySpec::ExponentialRate { dim }),
        (0.3f64..4.0).prop_map(|shape| FamilySpec::GammaScale { shape }),
        Just(FamilySpec::UniformUpper { cap: 5.0 }),
        (1usize..4).prop_map(|dim| FamilySpec::LogisticRegression { dim }),
    ];
    run(cases, (family, 1usize..300, any::<u64>()), |(family, n, seed)| {
        let theta = family.default_theta();
        let a = sample_dataset(&family, &theta, n, &mut rng::stream(seed)).unwrap();
        let b = sample_dataset(&family, &theta, n, &mut rng::stream(seed)).unwrap();
        let bits = |d: &collapse_lab::Dataset| {
            let mut v: Vec<u64> = d.values().iter().map(|x| x.to_bits()).collect();
            v.extend(d.labels().unwrap_or(&[]).iter().map(|&x| x as u64));
            v
        };
        prop_assert_eq!(bits(&a), bits(&b));
        Ok(())
    })
}

fn spd(p: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |i, j| entries[i * p + j]);
    &a * a.transpose() + DMatrix::identity(p, p) * 0.1
}

/// `P(T)` lies in `(0, 1/2]`, with `1/2` exactly at `v = 0`.
pub fn improvement_range(cases: u32) -> Result<(), String> {
    let strategy = (1usize..5)
        .prop_flat_map(|p| (Just(p), prop::collection::vec(-2.0f64..2.0, p * p), prop_oneof![Just(0.0), 1e-4f64..30.0], any::<u64>()));
    run(cases, strategy, |(p, entries, v, seed)| {
        let cov = spd(p, &entries);
        let shared = SharedDraws::new(p, 2000, &mut rng::stream(seed)).unwrap();
        let est = improvement_probability_shared(&cov, v, &shared).unwrap();
        prop_assert!(est.value > 0.0 && est.value <= 0.5, "v = {v}: {}", est.value);
        prop_assert_eq!(est.value == 0.5, v == 0.0);
        Ok(())
    })
}

/// Exported probability rows satisfy `ci_low <= value <= ci_high` within `[0, 1]`.
pub fn probability_intervals(cases: u32) -> Result<(), String> {
    run(cases, (chain_strategy(), 1usize..200, 0.05f64..2.0), |(cfg, reps, delta)| {
        let summary = run_monte_carlo(&cfg, &MonteCarloOptions::new(reps).delta(delta).parallelism(1)).unwrap();
        for row in summary_rows("prop", &summary).iter().filter(|r| r.is_probability()) {
            if row.value.is_nan() {
                continue;
            }
            prop_assert!((0.0..=1.0).contains(&row.value));
            prop_assert!(0.0 <= row.ci_low && row.ci_low <= row.value && row.value <= row.ci_high && row.ci_high <= 1.0,
                "{} at t = {}: [{}, {}] vs {}", row.metric, row.t, row.ci_low, row.ci_high, row.value);
        }
        Ok(())
    })
}

pub type Check = (&'static str, fn(u32) -> Result<(), String>);

/// Every check with its name, for summary reporting.
pub fn all_checks() -> Vec<Check> {
    vec![
        ("schedule coefficients", schedule_coefficients),
        ("inverse sum monotone", inverse_sum_monotone),
        ("drift ratio phase", drift_ratio_phase),
        ("threshold scale invariance", threshold_scale_invariance),
        ("tail bound monotone", tail_bound_monotone),
        ("telescoping", telescoping),
        ("determinism across workers", determinism_across_workers),
        ("dataset determinism", dataset_determinism),
        ("improvement range", improvement_range),
        ("probability intervals", probability_intervals),
    ]
}

pub fn theta(values: &[f64]) -> ParamPoint {
    ParamPoint::new(values.to_vec()).unwrap()
}
