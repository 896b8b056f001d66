use nalgebra::{DMatrix, DVector};

use super::types::{PolicyTable, StateDistribution, TabularMdp};
use crate::error::{Error, Result};

/// Tolerance on `Σ d = 1` for the visitation distribution returned by the
/// transposed resolvent solve.
const VISITATION_SUM_TOL: f64 = 1e-10;

/// Exact evaluation of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBundle {
    /// `V^π(s)`.
    pub v: DVector<f64>,
    /// `Q^π(s, a)`.
    pub q: DMatrix<f64>,
    /// `A^π(s, a) = Q^π(s, a) − V^π(s)`.
    pub adv: DMatrix<f64>,
    /// `d_μ^π(s)` for the distribution passed to [`policy_values`].
    pub d: StateDistribution,
}

impl ValueBundle {
    /// `V^π(ρ)`.
    pub fn value_at(&self, rho: &StateDistribution) -> f64 {
        rho.expect(&self.v)
    }
}

/// LU factors of `I − γP_π` and of its transpose for one policy.
pub(crate) struct Resolvent {
    gamma: f64,
    forward: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    transposed: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Resolvent {
    pub(crate) fn new(mdp: &TabularMdp, pi: &PolicyTable) -> Self {
        let p_pi = mdp.policy_transition(pi);
        let n = mdp.num_states();
        let m = DMatrix::identity(n, n) - p_pi * mdp.gamma();
        let mt = m.transpose();
        Self { gamma: mdp.gamma(), forward: m.lu(), transposed: mt.lu() }
    }

    /// Solves `(I − γP_π) x = b`.
    pub(crate) fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.forward.solve(b).ok_or_else(|| Error::Internal("singular resolvent I − γP_π".into()))
    }

    /// `d = (1 − γ)(I − γP_πᵀ)⁻¹ μ`, verified to sum to one.
    pub(crate) fn visitation(&self, mu: &StateDistribution) -> Result<StateDistribution> {
        let x = self
            .transposed
            .solve(mu.weights())
            .ok_or_else(|| Error::Internal("singular resolvent I − γP_πᵀ".into()))?;
        let d = x * (1.0 - self.gamma);
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > VISITATION_SUM_TOL {
            return Err(Error::Internal(format!("visitation distribution sums to {sum}")));
        }
        // Round-off can leave entries at −1e-17 for unreachable states.
        Ok(StateDistribution::from_vector_unchecked(d.map(|x| x.max(0.0))))
    }
}

/// `r_π(s) = Σ_a π(a|s) r(s, a)`.
pub(crate) fn policy_reward(mdp: &TabularMdp, pi: &PolicyTable) -> DVector<f64> {
    DVector::from_fn(mdp.num_states(), |s, _| (0..mdp.num_actions()).map(|a| pi.prob(s, a) * mdp.reward(s, a)).sum())
}

/// `V`, `Q`, advantage and discounted visitation of `π` by direct linear solves.
pub fn policy_values(mdp: &TabularMdp, pi: &PolicyTable, mu: &StateDistribution) -> Result<ValueBundle> {
    mdp.check_policy(pi)?;
    mdp.check_distribution(mu, "mu")?;
    let res = Resolvent::new(mdp, pi);
    let v = res.solve(&policy_reward(mdp, pi))?;
    let q = mdp.backup(&v);
    let adv = DMatrix::from_fn(q.nrows(), q.ncols(), |s, a| q[(s, a)] - v[s]);
    let d = res.visitation(mu)?;
    Ok(ValueBundle { v, q, adv, d })
}

/// `d_μ^π(s) = (1 − γ) Σ_t γᵗ Pr(s_t = s | s_0 ~ μ, π)`.
pub fn discounted_state_distribution(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    mu: &StateDistribution,
) -> Result<StateDistribution> {
    mdp.check_policy(pi)?;
    mdp.check_distribution(mu, "mu")?;
    Resolvent::new(mdp, pi).visitation(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::PolicyTable;

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::new(&[vec![0.5, 0.5]], &[vec![vec![1.0], vec![1.0]]], 0.9).unwrap();
        let pi = PolicyTable::from_rows(&[vec![0.3, 0.7]]).unwrap();
        let vb = policy_values(&mdp, &pi, &StateDistribution::uniform(1)).unwrap();
        assert!((vb.v[0] - 5.0).abs() < 1e-12);
        assert!((vb.q[(0, 1)] - 5.0).abs() < 1e-12);
        assert!(vb.adv.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn bandit_embedding_reduces_to_expected_reward() {
        let mdp = TabularMdp::bandit(&[1.0, 0.2, 0.4]).unwrap();
        let pi = PolicyTable::from_rows(&[vec![0.2, 0.5, 0.3]]).unwrap();
        let vb = policy_values(&mdp, &pi, &StateDistribution::uniform(1)).unwrap();
        let expected = 0.2 + 0.1 + 0.12;
        assert!((vb.v[0] - expected).abs() < 1e-15);
        assert!((vb.adv[(0, 0)] - (1.0 - expected)).abs() < 1e-15);
    }

    #[test]
    fn visitation_is_mu_without_discount_or_motion() {
        let r = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.0, 1.0]];
        let mu = StateDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let pi = PolicyTable::uniform(3, 2);
        let stay = TabularMdp::self_loops(&r, 0.95).unwrap();
        let d = discounted_state_distribution(&stay, &pi, &mu).unwrap();
        for s in 0..3 {
            assert!((d.as_slice()[s] - mu.as_slice()[s]).abs() < 1e-12);
        }
        let mixing = TabularMdp::new(&r, &vec![vec![vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0]]; 3], 0.0).unwrap();
        let d = discounted_state_distribution(&mixing, &pi, &mu).unwrap();
        assert_eq!(d.as_slice(), mu.as_slice());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mdp = TabularMdp::bandit(&[1.0, 0.0]).unwrap();
        let pi = PolicyTable::uniform(1, 3);
        assert!(matches!(policy_values(&mdp, &pi, &StateDistribution::uniform(1)), Err(Error::DimensionMismatch(_))));
    }
}
