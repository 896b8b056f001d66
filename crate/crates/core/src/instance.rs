//! MDP instance files and seeded random instance generation.
//!
//! Full form:
//! `{"num_states":S,"num_actions":A,"gamma":g,"rewards":[[..]],"transitions":[[[..]]]}`.
//! Bandit shorthand: `{"rewards":[r0, .., rK-1]}` (one state, `γ = 0`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mdp::{PolicyLogits, StateDistribution, TabularMdp};

/// Seeded generator shared by every randomized component; ChaCha keeps
/// streams identical across platforms.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl From<&TabularMdp> for MdpFile {
    fn from(m: &TabularMdp) -> Self {
        let (s_n, a_n) = (m.num_states(), m.num_actions());
        MdpFile {
            num_states: s_n,
            num_actions: a_n,
            gamma: m.gamma(),
            rewards: (0..s_n).map(|s| (0..a_n).map(|a| m.reward(s, a)).collect()).collect(),
            transitions: (0..s_n)
                .map(|s| (0..a_n).map(|a| (0..s_n).map(|sp| m.transition(s, a, sp)).collect()).collect())
                .collect(),
        }
    }
}

impl MdpFile {
    pub fn to_mdp(&self) -> Result<TabularMdp> {
        if self.rewards.len() != self.num_states {
            return Err(Error::config(
                "num_states",
                format!("{} given but rewards has {} rows", self.num_states, self.rewards.len()),
            ));
        }
        if self.rewards.iter().any(|r| r.len() != self.num_actions) {
            return Err(Error::config(
                "num_actions",
                format!("{} given but a reward row has a different length", self.num_actions),
            ));
        }
        TabularMdp::new(&self.rewards, &self.transitions, self.gamma)
    }
}

/// Parses either the full instance form or the bandit shorthand.
pub fn mdp_from_value(v: &Value) -> Result<TabularMdp> {
    let obj = v.as_object().ok_or_else(|| Error::config("problem", "expected a JSON object"))?;
    let rewards = obj.get("rewards").ok_or_else(|| Error::config("rewards", "missing"))?;
    let is_flat = rewards.as_array().map(|a| a.iter().all(Value::is_number)).unwrap_or(false);
    if is_flat && !obj.contains_key("transitions") {
        if let Some(g) = obj.get("gamma").and_then(Value::as_f64) {
            if g != 0.0 {
                return Err(Error::config("gamma", "the bandit shorthand implies gamma = 0"));
            }
        }
        let r: Vec<f64> =
            serde_json::from_value(rewards.clone()).map_err(|e| Error::config("rewards", e.to_string()))?;
        return TabularMdp::bandit(&r);
    }
    for key in ["num_states", "num_actions", "gamma", "transitions"] {
        if !obj.contains_key(key) {
            return Err(Error::config(key, "missing"));
        }
    }
    let file: MdpFile = serde_json::from_value(v.clone()).map_err(|e| Error::config("problem", e.to_string()))?;
    file.to_mdp()
}

pub fn mdp_from_json(text: &str) -> Result<TabularMdp> {
    let v: Value = serde_json::from_str(text)?;
    mdp_from_value(&v)
}

pub fn mdp_to_json(m: &TabularMdp) -> String {
    serde_json::to_string(&MdpFile::from(m)).expect("MDP serializes")
}

/// I.i.d. uniform `[0, 1)` rewards.
pub fn random_rewards<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

/// A sample from the symmetric Dirichlet(1) distribution (normalized unit
/// exponentials).
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let z: f64 = x.iter().sum();
    for v in &mut x {
        *v /= z;
    }
    x
}

/// Uniform rewards and Dirichlet(1) transition rows.
pub fn random_mdp<R: Rng>(rng: &mut R, num_states: usize, num_actions: usize, gamma: f64) -> TabularMdp {
    let rewards: Vec<Vec<f64>> = (0..num_states).map(|_| random_rewards(rng, num_actions)).collect();
    let transitions: Vec<Vec<Vec<f64>>> =
        (0..num_states).map(|_| (0..num_actions).map(|_| random_simplex(rng, num_states)).collect()).collect();
    TabularMdp::new(&rewards, &transitions, gamma).expect("generated instance is valid")
}

pub fn random_bandit<R: Rng>(rng: &mut R, k: usize) -> TabularMdp {
    TabularMdp::bandit(&random_rewards(rng, k)).expect("generated bandit is valid")
}

/// Standard-normal logits scaled by `scale`.
pub fn random_logits<R: Rng>(rng: &mut R, num_states: usize, num_actions: usize, scale: f64) -> PolicyLogits {
    let m = nalgebra::DMatrix::from_fn(num_states, num_actions, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    });
    PolicyLogits::new(m).expect("finite logits")
}

/// A Dirichlet(1) state distribution, mixed with uniform so every entry is
/// bounded away from zero.
pub fn random_positive_distribution<R: Rng>(rng: &mut R, n: usize) -> StateDistribution {
    let x = random_simplex(rng, n);
    let mixed: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.5 / n as f64).collect();
    let z: f64 = mixed.iter().sum();
    StateDistribution::new(mixed.iter().map(|v| v / z).collect()).expect("valid distribution")
}
