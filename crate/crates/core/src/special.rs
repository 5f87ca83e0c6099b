//! Special functions used by the closed-form analytics.
//!
//! `erfc`, `lgamma` and `tgamma` come from `libm`. Digamma and the zeta-type
//! power sums are not provided there:
//! - `digamma`: recurrence shift to an argument of at least 16, then the
//!   asymptotic Bernoulli series through the `x^-12` term.
//! - `zeta` / `power_tail_sum`: explicit partial sums followed by an
//!   Euler-Maclaurin tail correction.

use std::f64::consts::PI;

/// Explicit terms summed before the Euler-Maclaurin tail takes over.
pub const ZETA_EXPLICIT_TERMS: u64 = 1_000_000;

/// Standard normal CDF, relatively accurate in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Natural log of `|Gamma(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    libm::tgamma(x)
}

/// Digamma `psi(x) = d/dx ln Gamma(x)`.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || (x <= 0.0 && x == x.floor()) {
        return f64::NAN;
    }
    if x < 0.0 {
        // psi(1 - x) - psi(x) = pi cot(pi x)
        return digamma(1.0 - x) - PI / (PI * x).tan();
    }
    let mut shift = 0.0;
    let mut y = x;
    while y < 16.0 {
        shift += 1.0 / y;
        y += 1.0;
    }
    let inv2 = 1.0 / (y * y);
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    y.ln() - 0.5 / y - series - shift
}

/// Bernoulli numbers B2, B4, ..., B12.
const BERNOULLI_EVEN: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// `sum_{t >= from} t^-s` for `s > 1` and `from >= 1` by Euler-Maclaurin at `from`.
///
/// Accurate to double precision once `from` is in the hundreds; callers that
/// need a small starting index sum the first terms explicitly (see [`zeta`]).
pub fn power_tail_sum(s: f64, from: u64) -> f64 {
    assert!(s > 1.0, "power tail sum diverges for s <= 1");
    let n = from as f64;
    let mut total = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising factorial s (s+1) ... (s + 2j - 2) and (2j)!
    let mut rising = s;
    let mut factorial = 2.0;
    let mut power = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        if j > 0 {
            let m = (2 * j) as f64;
            rising *= (s + m - 1.0) * (s + m);
            factorial *= (m + 1.0) * (m + 2.0);
            power /= n * n;
        }
        total += b / factorial * rising * power;
    }
    total
}

/// Sum of `t^-s` for `t` in `[from, to)` in reverse order.
pub fn power_partial_sum(s: f64, from: u64, to: u64) -> f64 {
    (from..to).rev().map(|t| (t as f64).powf(-s)).sum()
}

/// Riemann zeta for real `s > 1`.
pub fn zeta(s: f64) -> f64 {
    power_partial_sum(s, 1, ZETA_EXPLICIT_TERMS) + power_tail_sum(s, ZETA_EXPLICIT_TERMS)
}
