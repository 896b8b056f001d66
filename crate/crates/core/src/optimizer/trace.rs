use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::Result;

pub const CSV_HEADER: &str = "t,delta,soft_delta,opt_prob,min_prob,zeta_norm,grad_norm,tau_t";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `V*(ρ) − V^{π_t}(ρ)`.
    pub delta: f64,
    /// `Ṽ^{π*_τ}(ρ) − Ṽ^{π_t}(ρ)` while a positive temperature is in force.
    pub soft_delta: Option<f64>,
    /// Probability of the optimal action set (minimum over states).
    pub opt_prob: f64,
    pub min_prob: f64,
    /// `‖ζ_t‖₂` on entropy bandit runs.
    pub zeta_norm: Option<f64>,
    pub grad_norm: f64,
    pub tau_t: f64,
}

fn opt(out: &mut String, x: Option<f64>) {
    if let Some(x) = x {
        let _ = write!(out, "{x}");
    }
}

impl IterationRecord {
    pub fn csv_line(&self) -> String {
        let mut s = String::with_capacity(128);
        let _ = write!(s, "{},{},", self.t, self.delta);
        opt(&mut s, self.soft_delta);
        let _ = write!(s, ",{},{},", self.opt_prob, self.min_prob);
        opt(&mut s, self.zeta_norm);
        let _ = write!(s, ",{},{}", self.grad_norm, self.tau_t);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: RunConfig,
    pub records: Vec<IterationRecord>,
    /// `min_{s ≤ t} opt_prob_s` over every executed iteration.
    pub c_running: f64,
    /// Iterations actually executed (smaller than configured on early stop).
    pub iterations_run: usize,
    /// Optimal value gap of the instance.
    pub delta_star: f64,
    /// First iteration of plain updates in a two-stage run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_t: Option<usize>,
    /// Running minimum of opt_prob from the switch onwards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_after_switch: Option<f64>,
    /// Seconds.
    pub wall_time: f64,
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_line())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn deltas(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.t, r.delta)).collect()
    }

    pub fn soft_deltas(&self) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| r.soft_delta.map(|d| (r.t, d))).collect()
    }

    /// First recorded iteration satisfying `pred`.
    pub fn first_where<F: Fn(&IterationRecord) -> bool>(&self, pred: F) -> Option<usize> {
        self.records.iter().find(|r| pred(r)).map(|r| r.t)
    }
}
