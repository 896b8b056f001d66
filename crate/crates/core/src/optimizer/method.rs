use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Plain,
    Entropy,
    TwoStage,
    Decaying,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveTag {
    Adaptive,
}

/// Learning rate: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Fixed(f64),
    Named(AutoTag),
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::Named(AutoTag::Auto)
    }
}

impl StepSize {
    pub fn fixed(&self) -> Option<f64> {
        match self {
            StepSize::Fixed(x) => Some(*x),
            StepSize::Named(_) => None,
        }
    }
}

/// Two-stage switch point: an iteration index or `"adaptive"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SwitchPoint {
    At(usize),
    Named(AdaptiveTag),
}

impl Default for SwitchPoint {
    fn default() -> Self {
        SwitchPoint::Named(AdaptiveTag::Adaptive)
    }
}

pub const DEFAULT_SWITCH_TOL: f64 = 1e-6;

fn default_switch_tol() -> f64 {
    DEFAULT_SWITCH_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default)]
    pub eta: StepSize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub t1: SwitchPoint,
    #[serde(default = "default_switch_tol")]
    pub switch_tol: f64,
}

impl MethodSpec {
    fn base(kind: MethodKind) -> Self {
        MethodSpec {
            kind,
            eta: StepSize::default(),
            tau: None,
            alpha: None,
            t1: SwitchPoint::default(),
            switch_tol: DEFAULT_SWITCH_TOL,
        }
    }

    pub fn plain() -> Self {
        Self::base(MethodKind::Plain)
    }

    pub fn entropy(tau: f64) -> Self {
        MethodSpec { tau: Some(tau), ..Self::base(MethodKind::Entropy) }
    }

    pub fn two_stage(tau: f64, t1: SwitchPoint) -> Self {
        MethodSpec { tau: Some(tau), t1, ..Self::base(MethodKind::TwoStage) }
    }

    pub fn decaying(alpha: f64) -> Self {
        MethodSpec { alpha: Some(alpha), ..Self::base(MethodKind::Decaying) }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = StepSize::Fixed(eta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(eta) = self.eta.fixed() {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::config("eta", format!("must be positive, got {eta}")));
            }
        }
        match self.kind {
            MethodKind::Plain => {}
            MethodKind::Entropy | MethodKind::TwoStage => {
                let tau = self.tau.ok_or_else(|| Error::config("tau", "required for entropy methods"))?;
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::config("tau", format!("must be positive, got {tau}")));
                }
                if let Some(eta) = self.eta.fixed() {
                    if tau * eta > 1.0 {
                        return Err(Error::config("eta", format!("tau * eta = {} exceeds 1", tau * eta)));
                    }
                }
                if self.kind == MethodKind::TwoStage {
                    if let SwitchPoint::At(0) = self.t1 {
                        return Err(Error::config("t1", "must be at least 1"));
                    }
                    if !(self.switch_tol > 0.0 && self.switch_tol.is_finite()) {
                        return Err(Error::config("switch_tol", "must be positive"));
                    }
                }
            }
            MethodKind::Decaying => {
                let alpha = self.alpha.ok_or_else(|| Error::config("alpha", "required for the decaying schedule"))?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::config("alpha", format!("must be positive, got {alpha}")));
                }
                if self.eta.fixed().is_some() {
                    return Err(Error::config(
                        "eta",
                        "the decaying schedule sets eta_t = 1/tau_t; leave eta as \"auto\"",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Temperature in force at iteration `t` (ignoring any two-stage switch):
/// zero for plain updates, `τ` for entropy methods and `αΔ/log t` for the
/// decaying schedule, with `τ₁ = τ₂`.
pub fn temperature_at(method: &MethodSpec, delta_star: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("iterations are numbered from 1"));
    }
    match method.kind {
        MethodKind::Plain => Ok(0.0),
        MethodKind::Entropy | MethodKind::TwoStage => {
            method.tau.ok_or_else(|| Error::config("tau", "required for entropy methods"))
        }
        MethodKind::Decaying => {
            let alpha = method.alpha.ok_or_else(|| Error::config("alpha", "required for the decaying schedule"))?;
            if !(delta_star > 0.0 && delta_star.is_finite()) {
                return Err(Error::config(
                    "method",
                    format!("the decaying schedule needs a positive finite reward gap, got {delta_star}"),
                ));
            }
            Ok(alpha * delta_star / (t.max(2) as f64).ln())
        }
    }
}

/// Default plain step: `2/5` on bandits, `(1 − γ)³/8` otherwise.
pub fn default_plain_eta(is_bandit: bool, gamma: f64) -> f64 {
    if is_bandit {
        0.4
    } else {
        (1.0 - gamma).powi(3) / 8.0
    }
}

/// Default entropy step: `1/τ` on bandits, `(1 − γ)³/(8 + τ(4 + 8 log A))`
/// otherwise.
pub fn default_entropy_eta(is_bandit: bool, gamma: f64, tau: f64, num_actions: usize) -> f64 {
    if is_bandit {
        1.0 / tau
    } else {
        (1.0 - gamma).powi(3) / (8.0 + tau * (4.0 + 8.0 * (num_actions as f64).ln()))
    }
}
