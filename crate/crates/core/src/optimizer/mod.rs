//! Gradient-ascent loops for the plain, entropy-regularized, two-stage and
//! decaying-temperature update rules.

mod config;
mod engine;
mod method;
mod trace;

pub use config::{Init, ProblemSpec, RunConfig, Table, FULL_RECORD_HORIZON};
pub use engine::run;
pub use method::{
    default_entropy_eta, default_plain_eta, temperature_at, AdaptiveTag, AutoTag, MethodKind, MethodSpec, StepSize,
    SwitchPoint, DEFAULT_SWITCH_TOL,
};
pub use trace::{IterationRecord, RunTrace, CSV_HEADER};
