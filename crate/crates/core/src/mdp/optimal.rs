use nalgebra::{DMatrix, DVector};

use super::types::{PolicyTable, StateDistribution, TabularMdp};
use super::values::{policy_reward, Resolvent};
use crate::error::{Error, Result};

/// Default accuracy for the fixed-point solvers.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 1_000_000;

/// Optimal values, a greedy deterministic optimal policy and its value gap.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub v_star: DVector<f64>,
    pub q_star: DMatrix<f64>,
    /// Greedy action per state, lowest index on ties.
    pub a_star: Vec<usize>,
    /// `min_s min_{a ≠ a*(s)} Q*(s, a*(s)) − Q*(s, a)`; zero when any state
    /// has a tie (see `unique`), `+∞` when there is a single action.
    pub delta_star: f64,
    /// Whether the maximizer in each state is unique at `10·tol`.
    pub unique: Vec<bool>,
    /// Every action within `10·tol` of the max, per state.
    pub optimal_sets: Vec<Vec<usize>>,
}

impl OptimalSolution {
    pub fn all_unique(&self) -> bool {
        self.unique.iter().all(|u| *u)
    }

    /// The deterministic greedy optimal policy.
    pub fn policy(&self) -> PolicyTable {
        PolicyTable::deterministic(&self.a_star, self.q_star.ncols())
    }

    pub fn value_at(&self, rho: &StateDistribution) -> f64 {
        rho.expect(&self.v_star)
    }
}

/// Optimal action values by value iteration on `Q`, polished by an exact
/// evaluation of the greedy policy once it has stabilised.
pub fn solve_optimal(mdp: &TabularMdp, tol: f64) -> Result<OptimalSolution> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let gamma = mdp.gamma();
    let q = if gamma == 0.0 {
        mdp.rewards().clone()
    } else {
        let stop = tol * (1.0 - gamma) / (2.0 * gamma);
        let mut q = mdp.backup(&DVector::zeros(mdp.num_states()));
        let mut sweeps = 0;
        loop {
            let q_next = mdp.backup(&row_max(&q));
            let change = (&q_next - &q).amax();
            q = q_next;
            sweeps += 1;
            if change < stop {
                break;
            }
            if sweeps >= MAX_SWEEPS {
                return Err(Error::Internal("value iteration did not converge".into()));
            }
        }
        polish(mdp, q)?
    };
    Ok(summarize(q, tol))
}

/// Replaces the iterate by the exact Q-function of its greedy policy if that
/// policy satisfies the Bellman optimality equation to working precision.
fn polish(mdp: &TabularMdp, q: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let greedy: Vec<usize> = (0..q.nrows()).map(|s| argmax_row(&q, s)).collect();
    let pi = PolicyTable::deterministic(&greedy, mdp.num_actions());
    let v = Resolvent::new(mdp, &pi).solve(&policy_reward(mdp, &pi))?;
    let q_exact = mdp.backup(&v);
    let residual = (row_max(&q_exact) - &v).amax();
    if residual <= 1e-12 * (1.0 + v.amax()) {
        Ok(q_exact)
    } else {
        Ok(q)
    }
}

fn summarize(q: DMatrix<f64>, tol: f64) -> OptimalSolution {
    let (s_n, a_n) = q.shape();
    let tie = 10.0 * tol;
    let mut a_star = Vec::with_capacity(s_n);
    let mut unique = Vec::with_capacity(s_n);
    let mut optimal_sets = Vec::with_capacity(s_n);
    let mut delta_star = f64::INFINITY;
    for s in 0..s_n {
        let best = argmax_row(&q, s);
        let qmax = q[(s, best)];
        let set: Vec<usize> = (0..a_n).filter(|&a| qmax - q[(s, a)] <= tie).collect();
        unique.push(set.len() == 1);
        for a in (0..a_n).filter(|&a| a != best) {
            delta_star = delta_star.min(qmax - q[(s, a)]);
        }
        a_star.push(best);
        optimal_sets.push(set);
    }
    if unique.iter().any(|u| !u) {
        delta_star = 0.0;
    }
    OptimalSolution { v_star: row_max(&q), q_star: q, a_star, delta_star, unique, optimal_sets }
}

pub(crate) fn row_max(q: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(q.nrows(), |s, _| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn argmax_row(q: &DMatrix<f64>, s: usize) -> usize {
    let mut best = 0;
    for a in 1..q.ncols() {
        if q[(s, a)] > q[(s, best)] {
            best = a;
        }
    }
    best
}
