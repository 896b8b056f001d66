use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::manifest::{run_manifest, ExperimentManifest};
use super::EXIT_OK;
use crate::analysis::{rate_fit_trace, RateModel};
use crate::error::{Error, Result};
use crate::optimizer::{run, MethodKind, RunConfig, RunTrace};

/// Final gaps, the fitted rate and the probability floors of a finished run.
/// Entropy runs fit an exponential to the regularized gap; every other method
/// fits a power law to the plain gap.
pub fn run_summary(trace: &RunTrace) -> Value {
    let model = match trace.config.method.kind {
        MethodKind::Entropy => RateModel::Exponential,
        _ => RateModel::Power,
    };
    let last = trace.last();
    let mut v = json!({
        "iterations_run": trace.iterations_run,
        "final_delta": last.map(|r| r.delta),
        "final_soft_delta": last.and_then(|r| r.soft_delta),
        "delta_star": finite_or_null(trace.delta_star),
        "c_running": trace.c_running,
        "switch_t": trace.switch_t,
        "c_after_switch": trace.c_after_switch,
        "rate_model": model,
        "wall_time": trace.wall_time,
    });
    match rate_fit_trace(trace, model, None) {
        Ok(fit) => {
            v["slope"] = fit.slope.into();
            v["intercept"] = fit.intercept.into();
            v["r_squared"] = fit.r_squared.into();
            v["window"] = json!([fit.window.0, fit.window.1]);
        }
        Err(e) => v["fit_error"] = e.to_string().into(),
    }
    v
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        x.into()
    } else {
        Value::Null
    }
}

pub(super) fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

/// Writes the trace CSV to `csv` and its summary next to it; returns the
/// summary path.
pub fn write_run_outputs(trace: &RunTrace, csv: &Path) -> Result<PathBuf> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    trace.write_csv(BufWriter::new(File::create(csv)?))?;
    let sp = summary_path(csv);
    let mut summary = run_summary(trace);
    summary["config"] = serde_json::to_value(&trace.config)?;
    fs::write(&sp, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(sp)
}

pub(super) fn cmd_run(config: &Path, out_path: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let text = fs::read_to_string(config)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{e}")))?;
    if value.get("runs").is_some() {
        let manifest = ExperimentManifest::from_value(value)?;
        return run_manifest(&manifest, out_path, out, err);
    }
    let out_path = out_path.ok_or_else(|| Error::config("out", "a single run needs --out <path>"))?;
    let cfg = RunConfig::from_json(&text)?;
    let trace = run(&cfg)?;
    let sp = write_run_outputs(&trace, out_path)?;
    writeln!(out, "{}", serde_json::to_string(&run_summary(&trace))?)?;
    writeln!(err, "wrote {} and {}", out_path.display(), sp.display())?;
    Ok(EXIT_OK)
}
