//! Rate fits and envelope checks along optimizer traces.

use serde_json::json;

use super::report::{CheckReport, RateFit, RateModel};
use crate::error::{Error, Result};
use crate::optimizer::RunTrace;

/// Least-squares fit of `log δ` against `log t` (power) or `t` (exponential).
///
/// The default window is the last decade `[t_max/10, t_max]` for the power
/// model and the second half `[t_max/2, t_max]` for the exponential model,
/// where `t_max` is the last step before the first non-positive value. If a
/// non-positive value falls inside an explicit window, the window is cut just
/// before it.
pub fn rate_fit(points: &[(usize, f64)], model: RateModel, window: Option<(usize, usize)>) -> Result<RateFit> {
    if points.is_empty() {
        return Err(Error::TraceTooShort("no points to fit".into()));
    }
    let t_max = points.iter().take_while(|p| p.1 > 0.0).map(|p| p.0).max().unwrap_or(points[0].0);
    let (lo, mut hi) = window.unwrap_or(match model {
        RateModel::Power => ((t_max / 10).max(1), t_max),
        RateModel::Exponential => ((t_max / 2).max(1), t_max),
    });
    if lo > hi {
        return Err(Error::invalid(format!("empty window ({lo}, {hi})")));
    }
    if let Some(bad) =
        points.iter().filter(|(t, d)| *t >= lo && *t <= hi && (d.is_nan() || *d <= 0.0)).map(|p| p.0).min()
    {
        hi = bad.saturating_sub(1);
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .map(|&(t, d)| {
            let x = match model {
                RateModel::Power => (t as f64).ln(),
                RateModel::Exponential => t as f64,
            };
            (x, d.ln())
        })
        .collect();
    if xy.len() < 2 {
        return Err(Error::Degenerate(format!("fewer than two positive points in window ({lo}, {hi})")));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all window points share one abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit { model, slope, intercept, r_squared, window: (lo, hi), points: xy.len() })
}

/// Fits the regularized gap when every record carries one, the plain gap
/// otherwise.
pub fn rate_fit_trace(trace: &RunTrace, model: RateModel, window: Option<(usize, usize)>) -> Result<RateFit> {
    let soft = trace.soft_deltas();
    if !soft.is_empty() && soft.len() == trace.records.len() {
        rate_fit(&soft, model, window)
    } else {
        rate_fit(&trace.deltas(), model, window)
    }
}

/// Minimum number of records for the lower-bound check.
pub const MIN_LOWER_BOUND_RECORDS: usize = 100;

/// `δ_t ≥ Δ²/(6t)` (bandit, `γ = 0`) or `δ_t ≥ (1 − γ)⁵Δ*²/(12t)` for every
/// recorded `t` in the final quarter of the trace. Reported as the worst
/// margin over that window.
pub fn lower_bound_check(points: &[(usize, f64)], delta_star: f64, gamma: f64, is_bandit: bool) -> Result<CheckReport> {
    if points.len() < MIN_LOWER_BOUND_RECORDS {
        return Err(Error::TraceTooShort(format!("{} records, need at least {MIN_LOWER_BOUND_RECORDS}", points.len())));
    }
    if !(delta_star > 0.0 && delta_star.is_finite()) {
        return Err(Error::Degenerate("the lower bound needs a positive finite gap".into()));
    }
    let ctx = json!({"delta_star": delta_star, "gamma": gamma});
    if points[0].1 <= 0.0 {
        return Ok(CheckReport::geq("lower_bound", 0.0, 0.0, 0.0, ctx)
            .with_note("not applicable: the trace starts at an optimal policy"));
    }
    let coef =
        if is_bandit { delta_star * delta_star / 6.0 } else { (1.0 - gamma).powi(5) * delta_star * delta_star / 12.0 };
    let t_last = points.iter().map(|p| p.0).max().expect("non-empty");
    let start = t_last - t_last / 4;
    let (t, d, b) = points
        .iter()
        .filter(|p| p.0 >= start)
        .map(|&(t, d)| (t, d, coef / t as f64))
        .min_by(|x, y| (x.1 - x.2).total_cmp(&(y.1 - y.2)))
        .expect("window is non-empty");
    let mut ctx = ctx;
    ctx["t"] = t.into();
    ctx["window_start"] = start.into();
    Ok(CheckReport::geq("lower_bound", d, b, 0.0, ctx))
}

/// `δ_t ≤ 5/(t·c_t²)` at every recorded step, with `c_t` the running minimum of
/// the optimal-action probability. The running minimum is rebuilt from the
/// records, which is exact when every step up to the last one is recorded and
/// otherwise only loosens the envelope.
pub fn pseudo_rate_envelope(trace: &RunTrace) -> CheckReport {
    let mut c = f64::INFINITY;
    let mut worst: Option<(usize, f64, f64)> = None;
    for r in &trace.records {
        c = c.min(r.opt_prob);
        let bound = 5.0 / (r.t as f64 * c * c);
        if worst.is_none_or(|w| bound - r.delta < w.2 - w.1) {
            worst = Some((r.t, r.delta, bound));
        }
    }
    let (t, d, b) = worst.unwrap_or((0, 0.0, 0.0));
    CheckReport::geq("pseudo_rate_envelope", b, d, 0.0, json!({"t": t}))
}

/// `δ_t ≤ 5K²/t` at every recorded step.
pub fn uniform_init_envelope(trace: &RunTrace, k: usize) -> CheckReport {
    let coef = 5.0 * (k * k) as f64;
    let (t, d, b) = trace
        .records
        .iter()
        .map(|r| (r.t, r.delta, coef / r.t as f64))
        .min_by(|x, y| (x.2 - x.1).total_cmp(&(y.2 - y.1)))
        .unwrap_or((0, 0.0, 0.0));
    CheckReport::geq("uniform_init_envelope", b, d, 0.0, json!({"t": t, "k": k}))
}

/// Optimal-action probability never decreases between consecutive records.
pub fn monotone_opt_prob(trace: &RunTrace) -> CheckReport {
    let worst = trace
        .records
        .windows(2)
        .map(|w| (w[1].t, w[1].opt_prob - w[0].opt_prob))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    CheckReport::geq("monotone_opt_prob", worst.1, 0.0, 0.0, json!({"t": worst.0}))
}

/// The tracked objective gap (`δ` for plain runs, `δ̃` while a temperature is
/// in force) never increases by more than `tol` between consecutive records.
pub fn monotone_gap(trace: &RunTrace, tol: f64) -> CheckReport {
    let gap = |r: &crate::optimizer::IterationRecord| r.soft_delta.unwrap_or(r.delta);
    let worst = trace
        .records
        .windows(2)
        .filter(|w| w[0].tau_t == w[1].tau_t)
        .map(|w| (w[1].t, gap(&w[0]) - gap(&w[1])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    CheckReport::geq("monotone_gap", worst.1, 0.0, tol, json!({"t": worst.0}))
}

/// `‖ζ_{t+1}‖₂ ≤ (1 − τη·min_a π_t(a))·‖ζ_t‖₂` between consecutive recorded
/// steps `t, t+1` of an entropy bandit trace.
pub fn contraction_along_trace(trace: &RunTrace, eta: f64, tol: f64) -> Result<CheckReport> {
    let mut worst: Option<(usize, f64, f64)> = None;
    for w in trace.records.windows(2) {
        if w[1].t != w[0].t + 1 {
            continue;
        }
        let (z0, z1) = match (w[0].zeta_norm, w[1].zeta_norm) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        let bound = (1.0 - w[0].tau_t * eta * w[0].min_prob) * z0;
        if worst.is_none_or(|x| bound - z1 < x.2 - x.1) {
            worst = Some((w[0].t, z1, bound));
        }
    }
    let (t, z, b) = worst.ok_or_else(|| Error::TraceTooShort("no consecutive entropy records".into()))?;
    Ok(CheckReport::geq("contraction_along_trace", b, z, tol, json!({"t": t, "eta": eta})))
}

/// `c = (1/K)·exp(−1/τ)·exp(−4(‖θ₁‖∞ + 1/τ)√K)`, the closed-form floor on the
/// minimum action probability of entropy-regularized bandit updates.
pub fn min_prob_floor(k: usize, tau: f64, theta1_max_abs: f64) -> f64 {
    let kf = k as f64;
    (1.0 / kf) * (-1.0 / tau).exp() * (-4.0 * (theta1_max_abs + 1.0 / tau) * kf.sqrt()).exp()
}

/// `min_a π_t(a) ≥ floor` at every recorded step.
pub fn min_prob_floor_check(trace: &RunTrace, floor: f64) -> CheckReport {
    let (t, m) = trace
        .records
        .iter()
        .map(|r| (r.t, r.min_prob))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    CheckReport::geq("min_prob_floor", m, floor, 0.0, json!({"t": t}))
}

/// `δ̃_t ≤ 2(τ‖θ₁‖∞ + 1)²K/τ · exp(−2τη·c·(t − 1))`.
pub fn linear_rate_envelope(trace: &RunTrace, k: usize, tau: f64, eta: f64, theta1_max_abs: f64) -> CheckReport {
    let c = min_prob_floor(k, tau, theta1_max_abs);
    let a = 2.0 * (tau * theta1_max_abs + 1.0).powi(2) * k as f64 / tau;
    let (t, d, b) = trace
        .records
        .iter()
        .filter_map(|r| r.soft_delta.map(|d| (r.t, d, a * (-2.0 * tau * eta * c * (r.t as f64 - 1.0)).exp())))
        .min_by(|x, y| (x.2 - x.1).total_cmp(&(y.2 - y.1)))
        .unwrap_or((0, 0.0, 0.0));
    CheckReport::geq("linear_rate_envelope", b, d, 0.0, json!({"t": t, "c": c}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, f64)> = (1..=10_000).map(|t| (t, 5.0 / t as f64)).collect();
        let fit = rate_fit(&pts, RateModel::Power, None).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-9);
        assert_eq!(fit.window, (1000, 10_000));
    }

    #[test]
    fn exact_exponential() {
        let pts: Vec<(usize, f64)> = (1..=2000).map(|t| (t, 3.0 * (-0.01 * t as f64).exp())).collect();
        let fit = rate_fit(&pts, RateModel::Exponential, None).unwrap();
        assert!((fit.slope + 0.01).abs() < 1e-6);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn window_shrinks_before_zero() {
        let mut pts: Vec<(usize, f64)> = (1..=100).map(|t| (t, 1.0 / t as f64)).collect();
        pts[89].1 = 0.0;
        let fit = rate_fit(&pts, RateModel::Power, Some((10, 100))).unwrap();
        assert_eq!(fit.window, (10, 89));
        let zeros: Vec<(usize, f64)> = (1..=100).map(|t| (t, 0.0)).collect();
        assert!(rate_fit(&zeros, RateModel::Power, None).is_err());
    }

    #[test]
    fn lower_bound_detects_fast_decay() {
        let fast: Vec<(usize, f64)> = (1..=1000).map(|t| (t, 1.0 / (t * t) as f64)).collect();
        assert!(!lower_bound_check(&fast, 0.5, 0.0, true).unwrap().pass);
        let slow: Vec<(usize, f64)> = (1..=1000).map(|t| (t, 1.0 / t as f64)).collect();
        assert!(lower_bound_check(&slow, 0.5, 0.0, true).unwrap().pass);
        let short: Vec<(usize, f64)> = (1..=10).map(|t| (t, 1.0)).collect();
        assert!(matches!(lower_bound_check(&short, 0.5, 0.0, true), Err(Error::TraceTooShort(_))));
        let zero: Vec<(usize, f64)> = (1..=200).map(|t| (t, 0.0)).collect();
        let rep = lower_bound_check(&zero, 0.5, 0.0, true).unwrap();
        assert!(rep.note.unwrap().starts_with("not applicable"));
    }
}
