//! Closed-form instances with known exact values.

use serde_json::json;

use super::report::CheckReport;
use crate::error::Result;
use crate::gradients::bandit_pg_gradient;
use crate::mdp::simplex;
use crate::mdp::PolicyLogits;

/// Tolerance for fixtures with rational closed forms.
pub const FIXTURE_TOL: f64 = 1e-12;

/// Rewards of the three-arm non-concavity instance.
pub const NONCONCAVE_REWARDS: [f64; 3] = [1.0, 0.9, 0.1];

/// Average of the two endpoint values and the value at the midpoint of the
/// segment between `x` and `y`.
pub fn midpoint_values<F>(f: F, x: &[f64], y: &[f64]) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * (f(x)? + f(y)?), f(&mid)?))
}

/// Witness of non-concavity along a segment: the endpoint average exceeds the
/// midpoint value.
pub fn nonconcavity_witness<F>(name: &str, f: F, x: &[f64], y: &[f64]) -> Result<CheckReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let (avg, mid) = midpoint_values(f, x, y)?;
    Ok(CheckReport::geq(name, avg, mid, 0.0, json!({"x": x, "y": y})))
}

/// Expected reward `softmax(θ)ᵀr`.
pub fn bandit_value(r: &[f64], theta: &[f64]) -> f64 {
    simplex::softmax(theta).iter().zip(r).map(|(p, x)| p * x).sum()
}

/// The non-concave three-arm instance: `θ = 0` and `θ′ = (ln 9, ln 16, ln 25)`
/// have endpoint average `1777/3000` while the midpoint `(ln 3, ln 4, ln 5)`
/// attains only `71/120`. Returns the strict witness followed by the two exact
/// value comparisons.
pub fn nonconcavity_fixture() -> Result<Vec<CheckReport>> {
    let r = NONCONCAVE_REWARDS;
    let x = [0.0; 3];
    let y = [9f64.ln(), 16f64.ln(), 25f64.ln()];
    let f = |th: &[f64]| Ok(bandit_value(&r, th));
    let witness = nonconcavity_witness("nonconcavity", f, &x, &y)?;
    let (avg, mid) = midpoint_values(f, &x, &y)?;
    Ok(vec![
        witness,
        CheckReport::equal("nonconcavity_endpoint_average", avg, 1777.0 / 3000.0, FIXTURE_TOL, json!({})),
        CheckReport::equal("nonconcavity_midpoint", mid, 71.0 / 120.0, FIXTURE_TOL, json!({})),
    ])
}

/// `ε·√(6 − 24ε + 32ε²)`, the gradient norm at `π = (2ε, ½ − 2ε, ½)` with
/// `r = (5, 4, 4)`.
pub fn counterexample_norm(eps: f64) -> f64 {
    eps * (6.0 - 24.0 * eps + 32.0 * eps * eps).sqrt()
}

/// Gradient norm on the tied-runner-up instance compared with its closed form.
pub fn counterexample_fixture(eps: f64) -> Result<CheckReport> {
    let r = [5.0, 4.0, 4.0];
    let pi = [2.0 * eps, 0.5 - 2.0 * eps, 0.5];
    let theta = PolicyLogits::bandit(&pi.map(f64::ln))?;
    let norm = bandit_pg_gradient(&r, &theta)?.norm2();
    Ok(CheckReport::equal(
        "counterexample_gradient_norm",
        norm,
        counterexample_norm(eps),
        FIXTURE_TOL,
        json!({"epsilon": eps}),
    ))
}

/// `(r(2) − r(3)) / (2(r(1) − r(2)))` for three rewards sorted in decreasing
/// order: once `π(1)/π(3)` reaches this ratio the best arm's probability only
/// grows.
pub fn escape_threshold_ratio(r: &[f64; 3]) -> f64 {
    (r[1] - r[2]) / (2.0 * (r[0] - r[1]))
}

pub fn threshold_fixture() -> CheckReport {
    CheckReport::equal(
        "escape_threshold_ratio",
        escape_threshold_ratio(&NONCONCAVE_REWARDS),
        4.0,
        FIXTURE_TOL,
        json!({"r": NONCONCAVE_REWARDS}),
    )
}

/// All fixture reports.
pub fn all_fixtures() -> Result<Vec<CheckReport>> {
    let mut out = nonconcavity_fixture()?;
    out.push(counterexample_fixture(0.1)?);
    out.push(threshold_fixture());
    Ok(out)
}
