use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::method::MethodSpec;
use crate::error::{Error, Result};
use crate::instance::{self, rng_from_seed};
use crate::mdp::{PolicyLogits, PolicyTable, StateDistribution, TabularMdp};

/// Where the MDP comes from: an explicit instance (full form or bandit
/// shorthand), `{"random_bandit":{"num_actions":K,"seed":s}}` or
/// `{"random_mdp":{"num_states":S,"num_actions":A,"gamma":g,"seed":s}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProblemSpec(pub Value);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomBandit {
    num_actions: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomMdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    seed: u64,
}

impl ProblemSpec {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        if mdp.is_bandit() {
            return Self::bandit(&mdp.bandit_rewards());
        }
        ProblemSpec(serde_json::to_value(instance::MdpFile::from(mdp)).expect("serializable"))
    }

    pub fn bandit(rewards: &[f64]) -> Self {
        ProblemSpec(serde_json::json!({ "rewards": rewards }))
    }

    pub fn random_bandit(num_actions: usize, seed: u64) -> Self {
        ProblemSpec(serde_json::json!({"random_bandit": {"num_actions": num_actions, "seed": seed}}))
    }

    pub fn random_mdp(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Self {
        ProblemSpec(serde_json::json!({"random_mdp": {
            "num_states": num_states, "num_actions": num_actions, "gamma": gamma, "seed": seed
        }}))
    }

    pub fn build(&self) -> Result<TabularMdp> {
        if let Some(spec) = self.0.get("random_bandit") {
            let rb: RandomBandit =
                serde_json::from_value(spec.clone()).map_err(|e| Error::config("random_bandit", e.to_string()))?;
            if rb.num_actions == 0 {
                return Err(Error::config("num_actions", "must be positive"));
            }
            return Ok(instance::random_bandit(&mut rng_from_seed(rb.seed), rb.num_actions));
        }
        if let Some(spec) = self.0.get("random_mdp") {
            let rm: RandomMdp =
                serde_json::from_value(spec.clone()).map_err(|e| Error::config("random_mdp", e.to_string()))?;
            if rm.num_states == 0 || rm.num_actions == 0 {
                return Err(Error::config("random_mdp", "dimensions must be positive"));
            }
            if !(0.0..1.0).contains(&rm.gamma) {
                return Err(Error::config("gamma", format!("must lie in [0, 1), got {}", rm.gamma)));
            }
            return Ok(instance::random_mdp(&mut rng_from_seed(rm.seed), rm.num_states, rm.num_actions, rm.gamma));
        }
        instance::mdp_from_value(&self.0)
    }
}

/// A probability table given either as rows or, for bandits, a flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Table {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl Table {
    fn rows(&self) -> Vec<Vec<f64>> {
        match self {
            Table::Flat(v) => vec![v.clone()],
            Table::Rows(r) => r.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `θ₁ = 0`.
    Uniform,
    /// Standard-normal logits from a seeded stream.
    Random {
        seed: u64,
    },
    Logits(Table),
    /// `θ₁ = log π₁`; entries must be strictly positive.
    Policy(Table),
}

impl Init {
    pub fn logits(&self, num_states: usize, num_actions: usize) -> Result<PolicyLogits> {
        let theta = match self {
            Init::Uniform => PolicyLogits::zeros(num_states, num_actions),
            Init::Random { seed } => {
                let mut rng = rng_from_seed(*seed);
                // Burn one draw so the init stream differs from an instance
                // generated from the same seed.
                let _: u64 = rng.random();
                instance::random_logits(&mut rng, num_states, num_actions, 1.0)
            }
            Init::Logits(t) => PolicyLogits::from_rows(&t.rows()).map_err(|e| Error::config("init", e.to_string()))?,
            Init::Policy(t) => {
                let pi = PolicyTable::from_rows(&t.rows()).map_err(|e| Error::config("init", e.to_string()))?;
                PolicyLogits::from_policy(&pi).map_err(|e| Error::config("init", e.to_string()))?
            }
        };
        if theta.num_states() != num_states || theta.num_actions() != num_actions {
            return Err(Error::config(
                "init",
                format!(
                    "expected a {num_states}x{num_actions} table, got {}x{}",
                    theta.num_states(),
                    theta.num_actions()
                ),
            ));
        }
        Ok(theta)
    }
}

fn default_record_every() -> usize {
    1
}

fn default_init() -> Init {
    Init::Uniform
}

/// Iterations up to this index are always recorded; later ones every
/// `record_every` steps.
pub const FULL_RECORD_HORIZON: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Distribution the gradient is taken under; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Evaluation distribution; equal to `mu` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    pub method: MethodSpec,
    #[serde(default = "default_init")]
    pub init: Init,
    pub iterations: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Stop after the first iteration whose sub-optimality is below this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_delta_below: Option<f64>,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, method: MethodSpec, iterations: usize) -> Self {
        RunConfig {
            problem,
            mu: None,
            rho: None,
            method,
            init: Init::Uniform,
            iterations,
            record_every: 1,
            stop_delta_below: None,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_record_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    /// Parses a config, accepting a bare problem at the top level in place of
    /// the `problem` key.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut v: Value = serde_json::from_str(text)?;
        if let Some(obj) = v.as_object_mut() {
            if !obj.contains_key("problem") {
                let keys: Vec<&str> = ["num_states", "num_actions", "gamma", "rewards", "transitions"]
                    .into_iter()
                    .filter(|k| obj.contains_key(*k))
                    .collect();
                let mut problem = serde_json::Map::new();
                for k in keys {
                    problem.insert(k.to_string(), obj.remove(k).expect("present"));
                }
                obj.insert("problem".into(), Value::Object(problem));
            }
        }
        serde_json::from_value(v).map_err(|e| Error::config("config", e.to_string()))
    }

    pub(crate) fn resolve(&self) -> Result<ResolvedRun> {
        let mdp = self.problem.build()?;
        self.method.validate()?;
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        if let Some(x) = self.stop_delta_below {
            if x.is_nan() || x <= 0.0 {
                return Err(Error::config("stop_delta_below", "must be positive"));
            }
        }
        let s_n = mdp.num_states();
        let dist = |field: &str, w: &Option<Vec<f64>>| -> Result<Option<StateDistribution>> {
            match w {
                None => Ok(None),
                Some(w) => {
                    if w.len() != s_n {
                        return Err(Error::config(
                            field,
                            format!("length {} but the problem has {s_n} states", w.len()),
                        ));
                    }
                    StateDistribution::new(w.clone()).map(Some).map_err(|e| Error::config(field, e.to_string()))
                }
            }
        };
        let mu = dist("mu", &self.mu)?.unwrap_or_else(|| StateDistribution::uniform(s_n));
        let rho = dist("rho", &self.rho)?.unwrap_or_else(|| mu.clone());
        if !mdp.is_bandit() && mu.min() <= 0.0 {
            return Err(Error::config("mu", "every state needs positive initial weight"));
        }
        if !mdp.is_bandit() && self.method.kind == super::MethodKind::Decaying {
            return Err(Error::config("method", "the decaying schedule is defined for bandits only"));
        }
        let theta = self.init.logits(s_n, mdp.num_actions())?;
        Ok(ResolvedRun { mdp, mu, rho, theta })
    }
}

pub(crate) struct ResolvedRun {
    pub mdp: TabularMdp,
    pub mu: StateDistribution,
    pub rho: StateDistribution,
    pub theta: PolicyLogits,
}
