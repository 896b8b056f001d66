use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Outcome of one inequality certificate. The inequality is always phrased as
/// `lhs ≥ rhs`; it passes iff `margin = lhs − rhs ≥ −tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
    /// Seed and parameters of the instance.
    pub context: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    /// `lhs ≥ rhs` up to `tol`.
    pub fn geq(name: &str, lhs: f64, rhs: f64, tol: f64, context: Value) -> Self {
        let margin = lhs - rhs;
        CheckReport { name: name.to_string(), lhs, rhs, margin, tol, pass: margin >= -tol, context, note: None }
    }

    /// `a = b` up to `tol`, reported as `0 ≥ |a − b|`; both sides go into the
    /// context.
    pub fn equal(name: &str, a: f64, b: f64, tol: f64, mut context: Value) -> Self {
        if let Value::Object(map) = &mut context {
            map.insert("a".into(), a.into());
            map.insert("b".into(), b.into());
        }
        let diff = (a - b).abs();
        let mut rep = Self::geq(name, 0.0, diff, tol, context);
        if diff.is_nan() {
            rep.pass = false;
        }
        rep
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `log δ = intercept + slope·log t`.
    Power,
    /// `log δ = intercept + slope·t`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
    pub points: usize,
}

/// Number of failed reports.
pub fn count_failures(reports: &[CheckReport]) -> usize {
    reports.iter().filter(|r| !r.pass).count()
}
