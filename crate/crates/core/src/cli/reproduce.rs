use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde_json::{json, Value};

use super::run::write_run_outputs;
use crate::analysis::{rate_fit, rate_fit_trace, CheckReport, RateFit, RateModel};
use crate::error::{Error, Result};
use crate::mdp::simplex;
use crate::optimizer::{run, Init, MethodSpec, ProblemSpec, RunConfig, RunTrace, Table};

/// Seed of the random rewards and initial logits shared by the K = 20 and
/// K = 10 figures.
pub const FIGURE_SEED: u64 = 33;
/// Rewards of the bad-initialization comparison.
pub const FIG4_REWARDS: [f64; 5] = [1.0, 0.9, 0.5, 0.3, 0.1];
/// Initial policy of the bad-initialization comparison: almost all mass on
/// the runner-up arm.
pub const FIG4_INIT: [f64; 5] = [0.005, 0.965, 0.01, 0.01, 0.01];
/// Gap target for the iterations-to-threshold comparison.
pub const FIG4_DELTA: f64 = 0.1;
pub const FIG5_ALPHAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

const TEMPERATURE: f64 = 0.2;
const ETA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Full,
    /// Iteration budgets divided by ten.
    Desk,
}

impl Scale {
    fn iterations(self, full: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Desk => full / 10,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl Figure {
    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5]
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::config("figure", format!("unknown figure `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct FigureOutput {
    pub figure: Figure,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    pub checks: Vec<CheckReport>,
}

/// K = 20 random bandit, random initial logits, plain updates with η = 2/5.
pub fn fig2_config(scale: Scale) -> RunConfig {
    let t = scale.iterations(300_000);
    RunConfig::new(ProblemSpec::random_bandit(20, FIGURE_SEED), MethodSpec::plain().with_eta(ETA), t)
        .with_init(Init::Random { seed: FIGURE_SEED })
        .with_record_every((t / 30_000).max(1))
}

/// The same instance and start under entropy-regularized updates, τ = 0.2.
pub fn fig3_config(scale: Scale) -> RunConfig {
    RunConfig::new(
        ProblemSpec::random_bandit(20, FIGURE_SEED),
        MethodSpec::entropy(TEMPERATURE).with_eta(ETA),
        scale.iterations(50_000),
    )
    .with_init(Init::Random { seed: FIGURE_SEED })
}

/// Plain and entropy-regularized runs from the bad start, each stopped once
/// the gap drops below [`FIG4_DELTA`].
pub fn fig4_configs(scale: Scale) -> (RunConfig, RunConfig) {
    let t = scale.iterations(10_000_000);
    let make = |m: MethodSpec| {
        let mut c = RunConfig::new(ProblemSpec::bandit(&FIG4_REWARDS), m, t)
            .with_init(Init::Policy(Table::Flat(FIG4_INIT.to_vec())))
            .with_record_every(1000);
        c.stop_delta_below = Some(FIG4_DELTA);
        c
    };
    (make(MethodSpec::plain().with_eta(ETA)), make(MethodSpec::entropy(TEMPERATURE).with_eta(ETA)))
}

/// K = 10 random bandit from the uniform start, one decaying-temperature run
/// per α.
pub fn fig5_configs(scale: Scale) -> Vec<(f64, RunConfig)> {
    let t = scale.iterations(100_000);
    FIG5_ALPHAS
        .iter()
        .map(|&a| {
            let c = RunConfig::new(ProblemSpec::random_bandit(10, FIGURE_SEED), MethodSpec::decaying(a), t)
                .with_record_every((t / 10_000).max(1));
            (a, c)
        })
        .collect()
}

fn fit_json(fit: &RateFit) -> Value {
    serde_json::to_value(fit).expect("fit serializes")
}

fn emit(out_dir: &Path, name: &str, trace: &RunTrace, files: &mut Vec<PathBuf>) -> Result<()> {
    let csv = out_dir.join(format!("{name}.csv"));
    let sp = write_run_outputs(trace, &csv)?;
    files.push(csv);
    files.push(sp);
    Ok(())
}

/// Runs one figure's experiments, writes traces and a summary under
/// `out_dir`, and returns the figure's checks.
pub fn reproduce(figure: Figure, scale: Scale, out_dir: &Path) -> Result<FigureOutput> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let ctx = json!({"figure": figure.as_str(), "scale": scale.as_str(), "seed": FIGURE_SEED});
    let (summary, checks) = match figure {
        Figure::Fig2 => {
            let trace = run(&fig2_config(scale))?;
            emit(out_dir, "fig2", &trace, &mut files)?;
            let fit = rate_fit(&trace.deltas(), RateModel::Power, None)?;
            let check = CheckReport::geq("power_slope_near_minus_one", 0.1, (fit.slope + 1.0).abs(), 0.0, ctx.clone());
            (json!({"power_fit": fit_json(&fit), "delta_star": trace.delta_star}), vec![check])
        }
        Figure::Fig3 => {
            let cfg = fig3_config(scale);
            let trace = run(&cfg)?;
            emit(out_dir, "fig3", &trace, &mut files)?;
            let fit = rate_fit_trace(&trace, RateModel::Exponential, None)?;
            let r = cfg.problem.build()?.bandit_rewards();
            let scaled: Vec<f64> = r.iter().map(|x| x / TEMPERATURE).collect();
            let plateau = simplex::softmax(&scaled).into_iter().fold(f64::INFINITY, f64::min);
            let last = trace.last().map(|x| x.min_prob).unwrap_or(f64::NAN);
            let rel = (last - plateau).abs() / plateau;
            let mut checks = vec![
                CheckReport::geq("exponential_fit_r_squared", fit.r_squared, 0.99, 0.0, ctx.clone()),
                CheckReport::geq("exponential_slope_negative", -fit.slope, 0.0, 0.0, ctx.clone()),
            ];
            // The desk budget stops well before the minimum probability settles.
            if scale == Scale::Full {
                checks.push(CheckReport::geq("min_prob_plateau", 0.1, rel, 0.0, ctx.clone()));
            }
            (
                json!({
                    "exponential_fit": fit_json(&fit),
                    "min_prob_plateau": plateau,
                    "final_min_prob": last,
                    "min_prob_relative_gap": rel,
                }),
                checks,
            )
        }
        Figure::Fig4 => {
            let (pc, ec) = fig4_configs(scale);
            let plain = run(&pc)?;
            let ent = run(&ec)?;
            emit(out_dir, "fig4_plain", &plain, &mut files)?;
            emit(out_dir, "fig4_entropy", &ent, &mut files)?;
            let reached = |t: &RunTrace| t.last().is_some_and(|r| r.delta < FIG4_DELTA);
            let ratio = plain.iterations_run as f64 / ent.iterations_run as f64;
            let threshold = match scale {
                Scale::Full => 100.0,
                Scale::Desk => 30.0,
            };
            let mut check = CheckReport::geq("iteration_ratio", ratio, threshold, 0.0, ctx.clone());
            if !reached(&plain) {
                check = check.with_note("plain run hit the iteration budget; the ratio is a lower bound");
            }
            if !reached(&ent) {
                check.pass = false;
                check = check.with_note("entropy run did not reach the target gap");
            }
            (
                json!({
                    "plain_iterations": plain.iterations_run,
                    "plain_reached": reached(&plain),
                    "entropy_iterations": ent.iterations_run,
                    "entropy_reached": reached(&ent),
                    "ratio": ratio,
                    "target_delta": FIG4_DELTA,
                }),
                vec![check],
            )
        }
        Figure::Fig5 => {
            let mut per_alpha = Vec::new();
            let mut checks = Vec::new();
            for (alpha, cfg) in fig5_configs(scale) {
                let trace = run(&cfg)?;
                emit(out_dir, &format!("fig5_alpha_{alpha}"), &trace, &mut files)?;
                let fit = rate_fit(&trace.deltas(), RateModel::Power, None)?;
                let mut c = ctx.clone();
                c["alpha"] = alpha.into();
                checks.push(CheckReport::geq("decaying_slope_negative", -fit.slope, 0.0, 0.0, c));
                per_alpha
                    .push(json!({"alpha": alpha, "power_fit": fit_json(&fit), "partial_rate_exponent": -1.0 / alpha}));
            }
            (json!({"runs": per_alpha}), checks)
        }
    };
    let summary = json!({
        "figure": figure.as_str(),
        "scale": scale.as_str(),
        "seed": FIGURE_SEED,
        "results": summary,
        "checks": checks,
    });
    let sp = out_dir.join(format!("{figure}_summary.json"));
    fs::write(&sp, serde_json::to_string_pretty(&summary)? + "\n")?;
    files.push(sp);
    Ok(FigureOutput { figure, files, summary, checks })
}
