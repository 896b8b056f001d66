//! Exact policy gradients for the plain and entropy-regularized objectives and
//! a central finite-difference oracle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mdp::simplex::{self, h_apply};
use crate::mdp::{
    policy_values, soft_policy_values_with_log, soft_values_and_visitation, softmax_policy, PolicyLogits,
    StateDistribution, TabularMdp,
};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A gradient aligned with a [`PolicyLogits`] table.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable(DMatrix<f64>);

impl GradientTable {
    pub fn new(g: DMatrix<f64>) -> Self {
        GradientTable(g)
    }

    pub fn from_bandit(g: Vec<f64>) -> Self {
        GradientTable(DMatrix::from_row_slice(1, g.len(), &g))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        self.0.row(s).iter().copied().collect()
    }

    pub fn norm2(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.amax()
    }

    /// Largest `|Σ_a g(s, a)|` over states.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.0.nrows()).map(|s| self.0.row(s).sum().abs()).fold(0.0, f64::max)
    }

    /// `max |g − other| / max(1, ‖g‖∞)`.
    pub fn relative_error(&self, other: &GradientTable) -> Result<f64> {
        if self.0.shape() != other.0.shape() {
            return Err(Error::dims(format!("gradient shapes {:?} and {:?}", self.0.shape(), other.0.shape())));
        }
        Ok((&self.0 - &other.0).amax() / self.norm_inf().max(1.0))
    }
}

fn bandit_theta(r: &[f64], theta: &PolicyLogits) -> Result<Vec<f64>> {
    if theta.num_states() != 1 || theta.num_actions() != r.len() {
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
    Ok(theta.row(0))
}

/// `π ⊙ (r − πᵀr)` written into `out`.
pub(crate) fn bandit_pg_into(r: &[f64], pi: &[f64], out: &mut [f64]) {
    h_apply(pi, r, out);
}

/// `H(π)(r − τ log π)` written into `out`; `scratch` receives `r − τ log π`.
pub(crate) fn bandit_entropy_into(
    r: &[f64],
    log_pi: &[f64],
    pi: &[f64],
    tau: f64,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    for ((x, ri), lp) in scratch.iter_mut().zip(r).zip(log_pi) {
        *x = ri - tau * lp;
    }
    h_apply(pi, scratch, out);
}

/// `g(a) = π_θ(a)(r(a) − π_θᵀr)`.
pub fn bandit_pg_gradient(r: &[f64], theta: &PolicyLogits) -> Result<GradientTable> {
    let th = bandit_theta(r, theta)?;
    let pi = simplex::softmax(&th);
    let mut g = vec![0.0; r.len()];
    bandit_pg_into(r, &pi, &mut g);
    Ok(GradientTable::from_bandit(g))
}

/// `g = H(π_θ)(r − τ log π_θ)`.
pub fn bandit_entropy_gradient(r: &[f64], theta: &PolicyLogits, tau: f64) -> Result<GradientTable> {
    check_tau(tau)?;
    let th = bandit_theta(r, theta)?;
    let log_pi = simplex::log_softmax(&th);
    let pi: Vec<f64> = log_pi.iter().map(|x| x.exp()).collect();
    let mut scratch = vec![0.0; r.len()];
    let mut g = vec![0.0; r.len()];
    bandit_entropy_into(r, &log_pi, &pi, tau, &mut scratch, &mut g);
    Ok(GradientTable::from_bandit(g))
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `g(s, a) = d_μ(s) π(a|s) A(s, a) / (1 − γ)`.
pub fn mdp_pg_gradient(mdp: &TabularMdp, theta: &PolicyLogits, mu: &StateDistribution) -> Result<GradientTable> {
    mdp.check_logits(theta)?;
    let pi = softmax_policy(theta)?;
    let vb = policy_values(mdp, &pi, mu)?;
    let scale = 1.0 / (1.0 - mdp.gamma());
    let d = vb.d.as_slice();
    Ok(GradientTable(DMatrix::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        scale * d[s] * pi.prob(s, a) * vb.adv[(s, a)]
    })))
}

/// `g(s, a) = d_μ(s) π(a|s) Ã(s, a) / (1 − γ)`, with `log π = θ − logsumexp θ`.
pub fn mdp_entropy_gradient(
    mdp: &TabularMdp,
    theta: &PolicyLogits,
    mu: &StateDistribution,
    tau: f64,
) -> Result<GradientTable> {
    check_tau(tau)?;
    mdp.check_logits(theta)?;
    let pi = softmax_policy(theta)?;
    let log_pi = theta.log_policy();
    let (sb, d) = soft_values_and_visitation(mdp, &pi, &log_pi, mu, tau)?;
    let scale = 1.0 / (1.0 - mdp.gamma());
    let d = d.as_slice();
    Ok(GradientTable(DMatrix::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        scale * d[s] * pi.prob(s, a) * sb.adv_soft[(s, a)]
    })))
}

/// Gradient of the discounted entropy `ℍ(μ, π_θ)`, which is the soft value of
/// the zero-reward problem at unit temperature.
pub fn entropy_rate_gradient(mdp: &TabularMdp, theta: &PolicyLogits, mu: &StateDistribution) -> Result<GradientTable> {
    let zero = mdp.with_rewards(DMatrix::zeros(mdp.num_states(), mdp.num_actions()))?;
    mdp_entropy_gradient(&zero, theta, mu, 1.0)
}

/// `V^{π_θ}(μ)`.
pub fn value_objective(mdp: &TabularMdp, theta: &PolicyLogits, mu: &StateDistribution) -> Result<f64> {
    mdp.check_logits(theta)?;
    let pi = softmax_policy(theta)?;
    Ok(policy_values(mdp, &pi, mu)?.value_at(mu))
}

/// `Ṽ^{π_θ}(μ)`.
pub fn soft_value_objective(mdp: &TabularMdp, theta: &PolicyLogits, mu: &StateDistribution, tau: f64) -> Result<f64> {
    mdp.check_logits(theta)?;
    let pi = softmax_policy(theta)?;
    let sb = soft_policy_values_with_log(mdp, &pi, &theta.log_policy(), mu, tau)?;
    Ok(sb.value_at(mu))
}

/// `ℍ(μ, π_θ)`.
pub fn entropy_rate_objective(mdp: &TabularMdp, theta: &PolicyLogits, mu: &StateDistribution) -> Result<f64> {
    mdp.check_logits(theta)?;
    let pi = softmax_policy(theta)?;
    Ok(soft_policy_values_with_log(mdp, &pi, &theta.log_policy(), mu, 1.0)?.entropy_rate)
}

/// Central differences `(f(θ + h e) − f(θ − h e)) / 2h` in every coordinate.
pub fn finite_difference_gradient<F>(objective: F, theta: &PolicyLogits, h: f64) -> Result<GradientTable>
where
    F: Fn(&PolicyLogits) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let base = theta.matrix();
    let mut g = DMatrix::zeros(base.nrows(), base.ncols());
    let mut probe = base.clone();
    for s in 0..base.nrows() {
        for a in 0..base.ncols() {
            let x = base[(s, a)];
            probe[(s, a)] = x + h;
            let up = objective(&PolicyLogits::new(probe.clone())?)?;
            probe[(s, a)] = x - h;
            let down = objective(&PolicyLogits::new(probe.clone())?)?;
            probe[(s, a)] = x;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite {
                    t: 0,
                    detail: format!("objective is not finite near coordinate ({s}, {a})"),
                });
            }
            g[(s, a)] = (up - down) / (2.0 * h);
        }
    }
    Ok(GradientTable(g))
}
