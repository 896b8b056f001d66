//! Entropy-regularized ("soft") values and the softmax-optimal policy.

use nalgebra::{DMatrix, DVector};

use super::simplex;
use super::types::{PolicyTable, StateDistribution, TabularMdp};
use super::values::{policy_reward, Resolvent};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 10_000_000;

/// Soft value, soft Q, soft advantage and the discounted entropy of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftValueBundle {
    /// `Ṽ^π(s)`.
    pub v_soft: DVector<f64>,
    /// `Q̃^π(s, a) = r(s, a) + γ Σ P(s'|s, a) Ṽ^π(s')`.
    pub q_soft: DMatrix<f64>,
    /// `Ã^π(s, a) = Q̃^π(s, a) − τ log π(a|s) − Ṽ^π(s)`.
    pub adv_soft: DMatrix<f64>,
    /// `ℍ(ρ, π)` for the distribution the bundle was computed with.
    pub entropy_rate: f64,
    pub temperature: f64,
}

impl SoftValueBundle {
    pub fn value_at(&self, rho: &StateDistribution) -> f64 {
        rho.expect(&self.v_soft)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

fn check_positive(pi: &PolicyTable) -> Result<()> {
    if !pi.is_strictly_positive() {
        return Err(Error::invalid("entropy terms need a strictly positive policy"));
    }
    Ok(())
}

/// `h_π(s) = −Σ_a π(a|s) log π(a|s)`.
fn per_state_entropy(pi: &PolicyTable) -> DVector<f64> {
    DVector::from_fn(pi.num_states(), |s, _| simplex::entropy(&pi.row(s)))
}

/// Soft values of `π`, with `log π` taken from the table.
pub fn soft_policy_values(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    rho: &StateDistribution,
    tau: f64,
) -> Result<SoftValueBundle> {
    check_positive(pi)?;
    let log_pi = pi.matrix().map(f64::ln);
    soft_policy_values_with_log(mdp, pi, &log_pi, rho, tau)
}

/// Same as [`soft_policy_values`] with a caller-supplied `log π`, which the
/// gradient code computes as `θ − logsumexp(θ)` for full precision.
pub(crate) fn soft_policy_values_with_log(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    log_pi: &DMatrix<f64>,
    rho: &StateDistribution,
    tau: f64,
) -> Result<SoftValueBundle> {
    Ok(soft_values_and_visitation(mdp, pi, log_pi, rho, tau)?.0)
}

/// Soft values plus `d_ρ^π` from the same factorization.
pub(crate) fn soft_values_and_visitation(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    log_pi: &DMatrix<f64>,
    rho: &StateDistribution,
    tau: f64,
) -> Result<(SoftValueBundle, StateDistribution)> {
    check_tau(tau)?;
    mdp.check_policy(pi)?;
    mdp.check_distribution(rho, "rho")?;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let h = DVector::from_fn(s_n, |s, _| -(0..a_n).map(|a| pi.prob(s, a) * log_pi[(s, a)]).sum::<f64>());
    let res = Resolvent::new(mdp, pi);
    let r_soft = policy_reward(mdp, pi) + &h * tau;
    let v_soft = res.solve(&r_soft)?;
    let entropy_rate = rho.expect(&res.solve(&h)?);
    let q_soft = mdp.backup(&v_soft);
    let adv_soft = DMatrix::from_fn(s_n, a_n, |s, a| q_soft[(s, a)] - tau * log_pi[(s, a)] - v_soft[s]);
    let d = res.visitation(rho)?;
    Ok((SoftValueBundle { v_soft, q_soft, adv_soft, entropy_rate, temperature: tau }, d))
}

/// `ℍ(ρ, π) = ρᵀ(I − γP_π)⁻¹ h_π`.
pub fn discounted_entropy(mdp: &TabularMdp, pi: &PolicyTable, rho: &StateDistribution) -> Result<f64> {
    check_positive(pi)?;
    mdp.check_policy(pi)?;
    mdp.check_distribution(rho, "rho")?;
    let h = per_state_entropy(pi);
    Ok(rho.expect(&Resolvent::new(mdp, pi).solve(&h)?))
}

/// Softmax-optimal policy `π*_τ` by soft value iteration
/// `Ṽ(s) ← τ log Σ_a exp(Q̃(s, a)/τ)`, followed by an exact soft evaluation
/// of the extracted policy. The bundle's entropy rate is taken under `rho`.
pub fn solve_soft_optimal(
    mdp: &TabularMdp,
    tau: f64,
    tol: f64,
    rho: &StateDistribution,
) -> Result<(PolicyTable, SoftValueBundle)> {
    check_tau(tau)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let gamma = mdp.gamma();
    let soft_max = |q: &DMatrix<f64>| -> DVector<f64> {
        DVector::from_fn(q.nrows(), |s, _| {
            let scaled: Vec<f64> = q.row(s).iter().map(|x| x / tau).collect();
            tau * simplex::logsumexp(&scaled)
        })
    };
    let mut v = soft_max(&mdp.backup(&DVector::zeros(mdp.num_states())));
    if gamma > 0.0 {
        // Stop once the remaining fixed-point error is below tol / 2.
        let stop = tol * (1.0 - gamma) / (2.0 * gamma);
        let mut sweeps = 0;
        loop {
            let v_next = soft_max(&mdp.backup(&v));
            let change = (&v_next - &v).amax();
            v = v_next;
            sweeps += 1;
            if change < stop {
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::Internal("soft value iteration did not converge".into()));
            }
        }
    }
    let q = mdp.backup(&v);
    let (s_n, a_n) = q.shape();
    let mut pi = DMatrix::zeros(s_n, a_n);
    let mut log_pi = DMatrix::zeros(s_n, a_n);
    for s in 0..s_n {
        let scaled: Vec<f64> = q.row(s).iter().map(|x| x / tau).collect();
        let lp = simplex::log_softmax(&scaled);
        for a in 0..a_n {
            log_pi[(s, a)] = lp[a];
            pi[(s, a)] = lp[a].exp();
        }
    }
    // Renormalize rows so the table passes the simplex check exactly.
    for s in 0..s_n {
        let z: f64 = pi.row(s).iter().sum();
        for a in 0..a_n {
            pi[(s, a)] /= z;
        }
    }
    let pi = PolicyTable::new(pi)?;
    let bundle = soft_policy_values_with_log(mdp, &pi, &log_pi, rho, tau)?;
    Ok((pi, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_bandit_entropy_is_log_k() {
        let mdp = TabularMdp::bandit(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let pi = PolicyTable::uniform(1, 4);
        let rho = StateDistribution::uniform(1);
        let h = discounted_entropy(&mdp, &pi, &rho).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-15);
        let sb = soft_policy_values(&mdp, &pi, &rho, 0.3).unwrap();
        assert!((sb.v_soft[0] - (0.25 + 0.3 * 4f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn bandit_soft_optimum_is_softmax_of_scaled_rewards() {
        let mdp = TabularMdp::bandit(&[1.0, 0.0]).unwrap();
        let (pi, _) = solve_soft_optimal(&mdp, 1.0, 1e-12, &StateDistribution::uniform(1)).unwrap();
        let e = std::f64::consts::E;
        assert!((pi.prob(0, 0) - e / (1.0 + e)).abs() < 1e-15);
        assert!((pi.prob(0, 1) - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_and_bad_tau_rejected() {
        let mdp = TabularMdp::bandit(&[1.0, 0.0]).unwrap();
        let rho = StateDistribution::uniform(1);
        let pi = PolicyTable::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(soft_policy_values(&mdp, &pi, &rho, 0.1).is_err());
        assert!(discounted_entropy(&mdp, &pi, &rho).is_err());
        let pi = PolicyTable::uniform(1, 2);
        assert!(soft_policy_values(&mdp, &pi, &rho, 0.0).is_err());
        assert!(solve_soft_optimal(&mdp, -1.0, 1e-10, &rho).is_err());
    }
}
