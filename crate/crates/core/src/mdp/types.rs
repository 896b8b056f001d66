use nalgebra::{DMatrix, DVector};

use super::simplex::{self, SIMPLEX_TOL};
use crate::error::{Error, Result};

/// A finite discounted MDP with rewards in `[0, 1]`.
///
/// Transitions are stored as an `(S·A) × S` matrix whose row `s·A + a` holds
/// `P(· | s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transitions: DMatrix<f64>,
    rewards: DMatrix<f64>,
    gamma: f64,
}

impl TabularMdp {
    /// Builds and validates an MDP from nested `rewards[s][a]` and
    /// `transitions[s][a][s']` tables.
    pub fn new(rewards: &[Vec<f64>], transitions: &[Vec<Vec<f64>>], gamma: f64) -> Result<Self> {
        let s = rewards.len();
        if s == 0 {
            return Err(Error::config("rewards", "at least one state is required"));
        }
        let a = rewards[0].len();
        if a == 0 {
            return Err(Error::config("rewards", "at least one action is required"));
        }
        if rewards.iter().any(|row| row.len() != a) {
            return Err(Error::config("rewards", "every state must list the same number of actions"));
        }
        if transitions.len() != s || transitions.iter().any(|t| t.len() != a) {
            return Err(Error::config("transitions", format!("expected a {s}×{a}×{s} tensor")));
        }
        let mut p = DMatrix::zeros(s * a, s);
        for (si, per_state) in transitions.iter().enumerate() {
            for (ai, row) in per_state.iter().enumerate() {
                if row.len() != s {
                    return Err(Error::config(
                        "transitions",
                        format!("row ({si},{ai}) has length {}, expected {s}", row.len()),
                    ));
                }
                for (sp, &x) in row.iter().enumerate() {
                    p[(si * a + ai, sp)] = x;
                }
            }
        }
        let r = DMatrix::from_fn(s, a, |i, j| rewards[i][j]);
        Self::from_parts(r, p, gamma)
    }

    /// Builds from an `S × A` reward matrix and an `(S·A) × S` transition matrix.
    pub fn from_parts(rewards: DMatrix<f64>, transitions: DMatrix<f64>, gamma: f64) -> Result<Self> {
        let (s, a) = rewards.shape();
        if s == 0 || a == 0 {
            return Err(Error::config("rewards", "empty reward table"));
        }
        if transitions.shape() != (s * a, s) {
            return Err(Error::config(
                "transitions",
                format!("expected shape ({}, {s}), got {:?}", s * a, transitions.shape()),
            ));
        }
        if !gamma.is_finite() || !(0.0..1.0).contains(&gamma) {
            return Err(Error::config("gamma", format!("must lie in [0, 1), got {gamma}")));
        }
        if let Some(bad) = rewards.iter().find(|x| !x.is_finite() || **x < 0.0 || **x > 1.0) {
            return Err(Error::config("rewards", format!("every reward must lie in [0, 1], got {bad}")));
        }
        for row in 0..s * a {
            let r = transitions.row(row);
            if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config(
                    "transitions",
                    format!("row ({},{}) has a negative or non-finite entry", row / a, row % a),
                ));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::config("transitions", format!("row ({},{}) sums to {sum}", row / a, row % a)));
            }
        }
        Ok(Self { num_states: s, num_actions: a, transitions, rewards, gamma })
    }

    /// One state, `γ = 0`, self-loop transitions.
    pub fn bandit(rewards: &[f64]) -> Result<Self> {
        let k = rewards.len();
        if k == 0 {
            return Err(Error::config("rewards", "a bandit needs at least one arm"));
        }
        let r = DMatrix::from_row_slice(1, k, rewards);
        Self::from_parts(r, DMatrix::from_element(k, 1, 1.0), 0.0)
    }

    /// `S` independent bandits: every action in state `s` returns to `s`.
    pub fn self_loops(rewards: &[Vec<f64>], gamma: f64) -> Result<Self> {
        let s = rewards.len();
        let a = rewards.first().map_or(0, Vec::len);
        let transitions: Vec<Vec<Vec<f64>>> = (0..s)
            .map(|si| {
                (0..a)
                    .map(|_| {
                        let mut row = vec![0.0; s];
                        row[si] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        Self::new(rewards, &transitions, gamma)
    }

    /// Same dynamics and discount with a different reward table.
    pub fn with_rewards(&self, rewards: DMatrix<f64>) -> Result<Self> {
        Self::from_parts(rewards, self.transitions.clone(), self.gamma)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rewards(&self) -> &DMatrix<f64> {
        &self.rewards
    }

    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.transitions
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[(s, a)]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.num_actions + a, next)]
    }

    /// Single state with no discounting.
    pub fn is_bandit(&self) -> bool {
        self.num_states == 1 && self.gamma == 0.0
    }

    /// Reward row of state 0, for bandit instances.
    pub fn bandit_rewards(&self) -> Vec<f64> {
        self.rewards.row(0).iter().copied().collect()
    }

    /// `P_π(s, s') = Σ_a π(a|s) P(s'|s, a)`.
    pub fn policy_transition(&self, pi: &PolicyTable) -> DMatrix<f64> {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let mut m = DMatrix::zeros(s_n, s_n);
        for s in 0..s_n {
            for a in 0..a_n {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                let row = self.transitions.row(s * a_n + a);
                for sp in 0..s_n {
                    m[(s, sp)] += w * row[sp];
                }
            }
        }
        m
    }

    /// `Q(s, a) = r(s, a) + γ Σ_{s'} P(s'|s, a) v(s')`.
    pub fn backup(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let pv = &self.transitions * v;
        let a_n = self.num_actions;
        DMatrix::from_fn(self.num_states, a_n, |s, a| self.rewards[(s, a)] + self.gamma * pv[s * a_n + a])
    }

    pub(crate) fn check_policy(&self, pi: &PolicyTable) -> Result<()> {
        if pi.num_states() != self.num_states || pi.num_actions() != self.num_actions {
            return Err(Error::dims(format!(
                "policy is {}×{}, MDP is {}×{}",
                pi.num_states(),
                pi.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_logits(&self, theta: &PolicyLogits) -> Result<()> {
        if theta.num_states() != self.num_states || theta.num_actions() != self.num_actions {
            return Err(Error::dims(format!(
                "logits are {}×{}, MDP is {}×{}",
                theta.num_states(),
                theta.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_distribution(&self, d: &StateDistribution, what: &str) -> Result<()> {
        if d.len() != self.num_states {
            return Err(Error::dims(format!("{what} has {} entries, MDP has {} states", d.len(), self.num_states)));
        }
        Ok(())
    }
}

/// A probability vector over states (an initial distribution or a
/// discounted visitation distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution(DVector<f64>);

impl StateDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        simplex::check_probability_vector(&weights, "state distribution")?;
        Ok(Self(DVector::from_vec(weights)))
    }

    pub fn uniform(num_states: usize) -> Self {
        Self(DVector::from_element(num_states, 1.0 / num_states as f64))
    }

    pub(crate) fn from_vector_unchecked(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `ρᵀv`.
    pub fn expect(&self, v: &DVector<f64>) -> f64 {
        self.0.dot(v)
    }
}

/// Logit table `θ(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLogits(DMatrix<f64>);

impl PolicyLogits {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("empty logit table"));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        Ok(Self(theta))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        let a = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != a) {
            return Err(Error::dims("ragged logit table"));
        }
        Self::new(DMatrix::from_fn(s, a, |i, j| rows[i][j]))
    }

    /// A single-state table for bandits.
    pub fn bandit(theta: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, theta.len(), theta))
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self(DMatrix::zeros(num_states, num_actions))
    }

    /// `θ = log π`; requires a strictly positive policy.
    pub fn from_policy(pi: &PolicyTable) -> Result<Self> {
        if pi.matrix().iter().any(|p| *p <= 0.0) {
            return Err(Error::invalid("log of a zero probability"));
        }
        Self::new(pi.matrix().map(f64::ln))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        self.0.row(s).iter().copied().collect()
    }

    /// Row-wise `log π_θ(·|s)` computed as `θ − logsumexp(θ)`.
    pub fn log_policy(&self) -> DMatrix<f64> {
        let mut out = self.0.clone();
        for s in 0..self.num_states() {
            let lse = simplex::logsumexp(&self.row(s));
            for a in 0..self.num_actions() {
                out[(s, a)] -= lse;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// A tabular stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable(DMatrix<f64>);

impl PolicyTable {
    /// Validates that every row is a probability vector.
    pub fn new(pi: DMatrix<f64>) -> Result<Self> {
        for s in 0..pi.nrows() {
            let row: Vec<f64> = pi.row(s).iter().copied().collect();
            simplex::check_probability_vector(&row, "policy row")?;
        }
        Ok(Self(pi))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        let a = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != a) {
            return Err(Error::dims("ragged policy table"));
        }
        Self::new(DMatrix::from_fn(s, a, |i, j| rows[i][j]))
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self(DMatrix::from_element(num_states, num_actions, 1.0 / num_actions as f64))
    }

    /// The deterministic policy selecting `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        Self(DMatrix::from_fn(actions.len(), num_actions, |s, a| if actions[s] == a { 1.0 } else { 0.0 }))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.0[(s, a)]
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        self.0.row(s).iter().copied().collect()
    }

    pub fn num_states(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.ncols()
    }

    pub fn min_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|p| *p > 0.0)
    }
}

/// Row-wise max-subtracted softmax of a logit table.
pub fn softmax_policy(theta: &PolicyLogits) -> Result<PolicyTable> {
    if theta.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    let mut pi = theta.0.clone();
    for s in 0..theta.num_states() {
        let p = simplex::softmax(&theta.row(s));
        for (a, v) in p.into_iter().enumerate() {
            pi[(s, a)] = v;
        }
    }
    Ok(PolicyTable(pi))
}
