//! Gradient-domination (Łojasiewicz-type) inequalities, their reversed form,
//! smoothness witnesses and the degree probe.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::report::CheckReport;
use crate::error::{Error, Result};
use crate::gradients::{bandit_entropy_gradient, bandit_pg_gradient, mdp_entropy_gradient, GradientTable};
use crate::mdp::simplex::{self, center};
use crate::mdp::{
    discounted_state_distribution, policy_values, softmax_policy, solve_optimal, solve_soft_optimal, OptimalSolution,
    PolicyLogits, PolicyTable, StateDistribution, TabularMdp, DEFAULT_SOLVER_TOL,
};

/// Tolerance for bandit inequalities.
pub const BANDIT_TOL: f64 = 1e-10;
/// Tolerance for inequalities that go through linear solves.
pub const MDP_TOL: f64 = 1e-9;
/// Accuracy of the softmax-optimal reference policy.
const SOFT_TOL: f64 = 1e-12;
/// Rewards this close to the maximum count as optimal.
const TIE_TOL: f64 = 10.0 * DEFAULT_SOLVER_TOL;

/// Optimal arms of a reward vector and the sub-optimality of `π`, computed as
/// a sum of non-negative terms so it stays accurate near the optimum.
struct BanditGap {
    optimal: Vec<usize>,
    delta: f64,
    /// Reward gap to the best non-optimal arm (`+∞` if every arm is optimal).
    gap: f64,
}

fn bandit_gap(r: &[f64], pi: &[f64]) -> BanditGap {
    let r_max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let optimal: Vec<usize> = (0..r.len()).filter(|&a| r_max - r[a] <= TIE_TOL).collect();
    let delta = pi.iter().zip(r).map(|(p, x)| p * (r_max - x)).sum();
    let gap = (0..r.len()).filter(|a| !optimal.contains(a)).map(|a| r_max - r[a]).fold(f64::INFINITY, f64::min);
    BanditGap { optimal, delta, gap }
}

fn check_bandit_inputs(r: &[f64], theta: &PolicyLogits) -> Result<Vec<f64>> {
    if theta.num_states() != 1 || theta.num_actions() != r.len() || r.is_empty() {
        return Err(Error::dims(format!(
            "{} rewards but logits are {}x{}",
            r.len(),
            theta.num_states(),
            theta.num_actions()
        )));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("rewards must be finite"));
    }
    Ok(simplex::log_softmax(&theta.row(0)))
}

/// `‖∇ πᵀr‖₂ ≥ (Σ_{a*} π(a*)/√|A*|)·(π* − π)ᵀr`.
pub fn lojasiewicz_bandit(r: &[f64], theta: &PolicyLogits) -> Result<CheckReport> {
    let log_pi = check_bandit_inputs(r, theta)?;
    let pi: Vec<f64> = log_pi.iter().map(|x| x.exp()).collect();
    let bg = bandit_gap(r, &pi);
    let mass: f64 = bg.optimal.iter().map(|&a| pi[a]).sum();
    let coef = mass / (bg.optimal.len() as f64).sqrt();
    let g = bandit_pg_gradient(r, theta)?;
    Ok(CheckReport::geq(
        "lojasiewicz_bandit",
        g.norm2(),
        coef * bg.delta,
        BANDIT_TOL,
        json!({"k": r.len(), "optimal_arms": bg.optimal.len(), "delta": bg.delta}),
    ))
}

/// `(√2/Δ)·(π* − π)ᵀr ≥ ‖∇ πᵀr‖₂`.
pub fn reversed_lojasiewicz_bandit(r: &[f64], theta: &PolicyLogits) -> Result<CheckReport> {
    let log_pi = check_bandit_inputs(r, theta)?;
    let pi: Vec<f64> = log_pi.iter().map(|x| x.exp()).collect();
    let bg = bandit_gap(r, &pi);
    if bg.optimal.len() != 1 || !bg.gap.is_finite() {
        return Err(Error::Degenerate("the reversed inequality needs a unique optimal arm and a positive gap".into()));
    }
    let g = bandit_pg_gradient(r, theta)?;
    Ok(CheckReport::geq(
        "reversed_lojasiewicz_bandit",
        2f64.sqrt() / bg.gap * bg.delta,
        g.norm2(),
        BANDIT_TOL,
        json!({"k": r.len(), "gap": bg.gap, "delta": bg.delta}),
    ))
}

/// `ζ = τθ − r − mean(τθ − r)·1` and `‖ζ‖₂`.
pub fn contraction_residual(r: &[f64], theta: &PolicyLogits, tau: f64) -> Result<(Vec<f64>, f64)> {
    check_bandit_inputs(r, theta)?;
    let raw: Vec<f64> = theta.row(0).iter().zip(r).map(|(t, x)| tau * t - x).collect();
    let zeta = center(&raw);
    let n = simplex::norm2(&zeta);
    Ok((zeta, n))
}

/// `τ·KL(π_θ ‖ softmax(r/τ))`, the regularized sub-optimality of a bandit
/// policy.
pub fn bandit_soft_gap(r: &[f64], theta: &PolicyLogits, tau: f64) -> Result<f64> {
    check_bandit_inputs(r, theta)?;
    let scaled: Vec<f64> = r.iter().map(|x| x / tau).collect();
    Ok(tau * simplex::kl_from_logits(&theta.row(0), &scaled))
}

/// Bandit form: `‖∇‖₂ ≥ √(2τ)·min_a π(a)·δ̃^{1/2}`.
pub fn entropy_lojasiewicz_bandit(r: &[f64], theta: &PolicyLogits, tau: f64) -> Result<CheckReport> {
    let log_pi = check_bandit_inputs(r, theta)?;
    let g = bandit_entropy_gradient(r, theta, tau)?;
    let min_pi = log_pi.iter().copied().fold(f64::INFINITY, f64::min).exp();
    let soft_delta = bandit_soft_gap(r, theta, tau)?;
    let c = (2.0 * tau).sqrt() * min_pi;
    Ok(CheckReport::geq(
        "entropy_lojasiewicz_bandit",
        g.norm2(),
        c * soft_delta.sqrt(),
        BANDIT_TOL,
        json!({"k": r.len(), "tau": tau, "soft_delta": soft_delta}),
    ))
}

fn require_positive(mu: &StateDistribution) -> Result<()> {
    if mu.min() <= 0.0 {
        return Err(Error::Precondition("every state needs positive weight under mu".into()));
    }
    Ok(())
}

/// `V*(ρ) − V^π(ρ) = Σ_s d_ρ^π(s) Σ_a π(a|s)(V*(s) − Q*(s, a)) / (1 − γ)`.
pub(crate) fn value_gap(sol: &OptimalSolution, pi: &PolicyTable, d_rho: &StateDistribution, gamma: f64) -> f64 {
    let (s_n, a_n) = (pi.num_states(), pi.num_actions());
    (0..s_n)
        .map(|s| {
            d_rho.as_slice()[s]
                * (0..a_n).map(|a| pi.prob(s, a) * (sol.v_star[s] - sol.q_star[(s, a)]).max(0.0)).sum::<f64>()
        })
        .sum::<f64>()
        / (1.0 - gamma)
}

/// `Ṽ^{π*_τ}(ρ) − Ṽ^π(ρ) = τ Σ_s d_ρ^π(s) KL(π(·|s) ‖ π*_τ(·|s)) / (1 − γ)`.
pub(crate) fn soft_value_gap(
    theta: &PolicyLogits,
    log_star: &nalgebra::DMatrix<f64>,
    d_rho: &StateDistribution,
    gamma: f64,
    tau: f64,
) -> f64 {
    let log_pi = theta.log_policy();
    let kl: f64 = (0..log_pi.nrows())
        .map(|s| {
            let k: f64 = (0..log_pi.ncols()).map(|a| log_pi[(s, a)].exp() * (log_pi[(s, a)] - log_star[(s, a)])).sum();
            d_rho.as_slice()[s] * k.max(0.0)
        })
        .sum();
    tau * kl / (1.0 - gamma)
}

fn max_ratio(num: &StateDistribution, den: &StateDistribution) -> f64 {
    num.as_slice().iter().zip(den.as_slice()).map(|(a, b)| a / b).fold(0.0, f64::max)
}

/// `‖∂V(μ)/∂θ‖₂ ≥ min_s π(a*(s)|s) / (√S·‖d_ρ^{π*}/d_μ^π‖∞) · (V*(ρ) − V^π(ρ))`.
pub fn lojasiewicz_mdp(
    mdp: &TabularMdp,
    theta: &PolicyLogits,
    mu: &StateDistribution,
    rho: &StateDistribution,
) -> Result<CheckReport> {
    require_positive(mu)?;
    let sol = solve_optimal(mdp, DEFAULT_SOLVER_TOL)?;
    let pi = softmax_policy(theta)?;
    let vb = policy_values(mdp, &pi, mu)?;
    let d_star = discounted_state_distribution(mdp, &sol.policy(), rho)?;
    let d_rho = discounted_state_distribution(mdp, &pi, rho)?;
    let s_n = mdp.num_states();
    let scale = 1.0 / (1.0 - mdp.gamma());
    let g = nalgebra::DMatrix::from_fn(s_n, mdp.num_actions(), |s, a| {
        scale * vb.d.as_slice()[s] * pi.prob(s, a) * vb.adv[(s, a)]
    });
    let delta = value_gap(&sol, &pi, &d_rho, mdp.gamma());
    let min_opt = (0..s_n).map(|s| pi.prob(s, sol.a_star[s])).fold(f64::INFINITY, f64::min);
    let mismatch = max_ratio(&d_star, &vb.d);
    let coef = min_opt / ((s_n as f64).sqrt() * mismatch);
    Ok(CheckReport::geq(
        "lojasiewicz_mdp",
        g.norm(),
        coef * delta,
        MDP_TOL,
        json!({"s": s_n, "a": mdp.num_actions(), "gamma": mdp.gamma(), "delta": delta, "mismatch": mismatch}),
    ))
}

/// `‖∂Ṽ(μ)/∂θ‖₂ ≥ C(θ)·(Ṽ^{π*_τ}(ρ) − Ṽ^π(ρ))^{1/2}` with
/// `C(θ) = √(2τ/S)·min_s √μ(s)·min_{s,a} π(a|s)·‖d_ρ^{π*_τ}/d_μ^π‖∞^{−1/2}`.
pub fn entropy_lojasiewicz_mdp(
    mdp: &TabularMdp,
    theta: &PolicyLogits,
    mu: &StateDistribution,
    rho: &StateDistribution,
    tau: f64,
) -> Result<CheckReport> {
    require_positive(mu)?;
    let (pi_star, _) = solve_soft_optimal(mdp, tau, SOFT_TOL, rho)?;
    let log_star = pi_star.matrix().map(f64::ln);
    let pi = softmax_policy(theta)?;
    let d_mu = discounted_state_distribution(mdp, &pi, mu)?;
    let d_rho = discounted_state_distribution(mdp, &pi, rho)?;
    let d_star = discounted_state_distribution(mdp, &pi_star, rho)?;
    let g = mdp_entropy_gradient(mdp, theta, mu, tau)?;
    let soft_delta = soft_value_gap(theta, &log_star, &d_rho, mdp.gamma(), tau);
    let s_n = mdp.num_states() as f64;
    let mismatch = max_ratio(&d_star, &d_mu);
    let c = (2.0 * tau).sqrt() / s_n.sqrt() * mu.min().sqrt() * pi.min_prob() / mismatch.sqrt();
    Ok(CheckReport::geq(
        "entropy_lojasiewicz_mdp",
        g.norm2(),
        c * soft_delta.sqrt(),
        MDP_TOL,
        json!({"s": mdp.num_states(), "a": mdp.num_actions(), "gamma": mdp.gamma(), "tau": tau, "soft_delta": soft_delta}),
    ))
}

/// Dispatches to the bandit form for single-state, undiscounted problems.
pub fn entropy_lojasiewicz(
    mdp: &TabularMdp,
    theta: &PolicyLogits,
    mu: &StateDistribution,
    rho: &StateDistribution,
    tau: f64,
) -> Result<CheckReport> {
    if mdp.is_bandit() {
        entropy_lojasiewicz_bandit(&mdp.bandit_rewards(), theta, tau)
    } else {
        entropy_lojasiewicz_mdp(mdp, theta, mu, rho, tau)
    }
}

/// `(√2/((1 − γ)Δ*))·(V*(μ) − V^π(μ)) ≥ ‖∂V(μ)/∂θ‖₂`.
pub fn reversed_lojasiewicz_mdp(mdp: &TabularMdp, theta: &PolicyLogits, mu: &StateDistribution) -> Result<CheckReport> {
    let sol = solve_optimal(mdp, DEFAULT_SOLVER_TOL)?;
    if !sol.all_unique() || !(sol.delta_star > 0.0 && sol.delta_star.is_finite()) {
        return Err(Error::Degenerate(
            "the reversed inequality needs unique optimal actions and a positive gap".into(),
        ));
    }
    let pi = softmax_policy(theta)?;
    let vb = policy_values(mdp, &pi, mu)?;
    let scale = 1.0 / (1.0 - mdp.gamma());
    let g = nalgebra::DMatrix::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        scale * vb.d.as_slice()[s] * pi.prob(s, a) * vb.adv[(s, a)]
    });
    let delta = value_gap(&sol, &pi, &vb.d, mdp.gamma());
    Ok(CheckReport::geq(
        "reversed_lojasiewicz_mdp",
        scale * 2f64.sqrt() / sol.delta_star * delta,
        g.norm(),
        MDP_TOL,
        json!({"s": mdp.num_states(), "a": mdp.num_actions(), "gamma": mdp.gamma(), "gap": sol.delta_star, "delta": delta}),
    ))
}

/// `(β/2)‖θ′ − θ‖² ≥ |f(θ′) − f(θ) − ⟨∇f(θ), θ′ − θ⟩|` with tolerance
/// `1e−10·(1 + β‖θ′ − θ‖²)`.
pub fn smoothness_witness<F, G>(
    name: &str,
    objective: F,
    gradient: G,
    theta: &PolicyLogits,
    theta_prime: &PolicyLogits,
    beta: f64,
    context: Value,
) -> Result<CheckReport>
where
    F: Fn(&PolicyLogits) -> Result<f64>,
    G: Fn(&PolicyLogits) -> Result<GradientTable>,
{
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::invalid("beta must be positive"));
    }
    let step = theta_prime.matrix() - theta.matrix();
    let dist2 = step.norm_squared();
    let g = gradient(theta)?;
    if g.matrix().shape() != step.shape() {
        return Err(Error::dims("gradient and logits differ in shape"));
    }
    let linear = g.matrix().dot(&step);
    let remainder = (objective(theta_prime)? - objective(theta)? - linear).abs();
    Ok(CheckReport::geq(name, 0.5 * beta * dist2, remainder, 1e-10 * (1.0 + beta * dist2), context))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMode {
    /// `C(θ) = π_θ(a*)` on the expected reward.
    Plain,
    /// `C(θ) = √(2τ)·min_a π_θ(a)` on the regularized objective.
    Entropy,
}

/// Tolerance of the degree checks; tighter than the other bandit checks
/// because both sides shrink with the probe scale.
pub const DEGREE_TOL: f64 = 1e-12;

/// `‖∇f(θ)‖₂ ≥ C(θ)·|f(θ) − f*|^{1−ξ}` at one point.
pub fn degree_check(r: &[f64], theta: &PolicyLogits, tau: f64, xi: f64, mode: DegreeMode) -> Result<CheckReport> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::invalid(format!("xi must lie in [0, 1], got {xi}")));
    }
    let log_pi = check_bandit_inputs(r, theta)?;
    let pi: Vec<f64> = log_pi.iter().map(|x| x.exp()).collect();
    let (grad, c, gap) = match mode {
        DegreeMode::Plain => {
            let bg = bandit_gap(r, &pi);
            let mass: f64 = bg.optimal.iter().map(|&a| pi[a]).sum();
            (bandit_pg_gradient(r, theta)?.norm2(), mass, bg.delta)
        }
        DegreeMode::Entropy => {
            let min_pi = log_pi.iter().copied().fold(f64::INFINITY, f64::min).exp();
            (
                bandit_entropy_gradient(r, theta, tau)?.norm2(),
                (2.0 * tau).sqrt() * min_pi,
                bandit_soft_gap(r, theta, tau)?,
            )
        }
    };
    Ok(CheckReport::geq(
        match mode {
            DegreeMode::Plain => "degree_plain",
            DegreeMode::Entropy => "degree_entropy",
        },
        grad,
        c * gap.powf(1.0 - xi),
        DEGREE_TOL,
        json!({"k": r.len(), "xi": xi, "tau": tau, "gap": gap}),
    ))
}

/// Logits of `(1 − 3ε, 2ε, ε)` assigned to the arms of `r` by decreasing
/// reward.
pub fn degree_probe_logits(r: &[f64], eps: f64) -> Result<PolicyLogits> {
    if r.len() != 3 {
        return Err(Error::invalid("the degree probe uses three arms"));
    }
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1/3), got {eps}")));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]));
    let mut theta = [0.0; 3];
    theta[order[0]] = (1.0 - 3.0 * eps).ln();
    theta[order[1]] = (2.0 * eps).ln();
    theta[order[2]] = eps.ln();
    PolicyLogits::bandit(&theta)
}

/// Degree check at the probe policy for one `ε`.
pub fn degree_probe_point(r: &[f64], tau: f64, xi: f64, eps: f64, mode: DegreeMode) -> Result<CheckReport> {
    let theta = degree_probe_logits(r, eps)?;
    let mut rep = degree_check(r, &theta, tau, xi, mode)?;
    rep.context["epsilon"] = eps.into();
    Ok(rep)
}

/// Probes `ε` on a log grid from `1e−2` down to `1e−8`.
pub fn degree_probe(r: &[f64], tau: f64, xi: f64, num_samples: usize, mode: DegreeMode) -> Result<Vec<CheckReport>> {
    (0..num_samples)
        .map(|i| {
            let frac = if num_samples > 1 { i as f64 / (num_samples - 1) as f64 } else { 1.0 };
            degree_probe_point(r, tau, xi, 10f64.powf(-2.0 - 6.0 * frac), mode)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(v: &[f64]) -> PolicyLogits {
        PolicyLogits::bandit(v).unwrap()
    }

    #[test]
    fn counterexample_instance_passes() {
        let th = logits(&[0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()]);
        let rep = lojasiewicz_bandit(&[5.0, 4.0, 4.0], &th).unwrap();
        assert!((rep.lhs - 0.1 * 3.92f64.sqrt()).abs() < 1e-14);
        assert!((rep.rhs - 0.16).abs() < 1e-14);
        assert!(rep.pass);
    }

    #[test]
    fn near_optimum_both_sides_vanish() {
        let rep = lojasiewicz_bandit(&[0.9, 0.1], &logits(&[40.0, 0.0])).unwrap();
        assert!(rep.lhs < 1e-15 && rep.rhs < 1e-15 && rep.pass);
        let rep = reversed_lojasiewicz_bandit(&[0.9, 0.1], &logits(&[40.0, 0.0])).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn reversed_on_three_arm_instance() {
        let rep = reversed_lojasiewicz_bandit(&[1.0, 0.9, 0.1], &logits(&[0.0; 3])).unwrap();
        assert!(rep.pass);
        let delta = 1.0 - 2.0 / 3.0;
        assert!((rep.lhs - 2f64.sqrt() / 0.1 * delta).abs() < 1e-9);
        assert!(matches!(reversed_lojasiewicz_bandit(&[0.5, 0.5], &logits(&[0.0; 2])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zeta_vanishes_on_shifted_scaled_rewards() {
        let r = [0.3, 0.8, 0.5];
        let tau = 0.4;
        for c in [0.0, 7.5, -3.0] {
            let th: Vec<f64> = r.iter().map(|x| x / tau + c).collect();
            let (_, n) = contraction_residual(&r, &logits(&th), tau).unwrap();
            assert!(n < 1e-14);
        }
    }

    #[test]
    fn entropy_two_arm_instance() {
        let rep = entropy_lojasiewicz_bandit(&[1.0, 0.0], &logits(&[0.0, 0.0]), 1.0).unwrap();
        let e = std::f64::consts::E;
        let star = [e / (1.0 + e), 1.0 / (1.0 + e)];
        let kl = 0.5 * (0.5f64 / star[0]).ln() + 0.5 * (0.5f64 / star[1]).ln();
        assert!((rep.rhs - 2f64.sqrt() * 0.5 * kl.sqrt()).abs() < 1e-14);
        assert!((rep.lhs - 0.25 * 2f64.sqrt()).abs() < 1e-15);
        assert!(rep.pass);
    }

    #[test]
    fn entropy_at_soft_optimum_is_zero() {
        let r = [0.2, 0.7];
        let th = logits(&[0.2 / 0.5, 0.7 / 0.5]);
        let rep = entropy_lojasiewicz_bandit(&r, &th, 0.5).unwrap();
        assert!(rep.lhs < 1e-15 && rep.rhs < 1e-7);
    }

    #[test]
    fn plain_degree_fails_above_zero() {
        let r = [0.6, 0.4, 0.2];
        let eps: f64 = 1e-6;
        let th = logits(&[(1.0 - 3.0 * eps).ln(), (2.0 * eps).ln(), eps.ln()]);
        assert!(!degree_check(&r, &th, 0.0, 0.1, DegreeMode::Plain).unwrap().pass);
        assert!(degree_check(&r, &th, 0.0, 0.0, DegreeMode::Plain).unwrap().pass);
        let reps = degree_probe(&r, 0.2, 0.5, 13, DegreeMode::Entropy).unwrap();
        assert!(reps.iter().all(|x| x.pass));
        let reps = degree_probe(&r, 0.0, 0.0, 13, DegreeMode::Plain).unwrap();
        assert!(reps.iter().all(|x| x.pass));
    }

    #[test]
    fn mdp_checks_need_positive_mu() {
        let mdp = TabularMdp::self_loops(&[vec![0.2, 0.9], vec![0.5, 0.1]], 0.9).unwrap();
        let mu = StateDistribution::new(vec![1.0, 0.0]).unwrap();
        let th = PolicyLogits::zeros(2, 2);
        assert!(matches!(lojasiewicz_mdp(&mdp, &th, &mu, &mu), Err(Error::Precondition(_))));
    }

    #[test]
    fn smoothness_at_same_point() {
        let r = [0.2, 0.9];
        let th = logits(&[0.3, -0.3]);
        let rep = smoothness_witness(
            "s",
            |t| Ok(simplex::softmax(&t.row(0)).iter().zip(&r).map(|(p, x)| p * x).sum()),
            |t| bandit_pg_gradient(&r, t),
            &th,
            &th,
            2.5,
            json!({}),
        )
        .unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.pass);
    }
}
