use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::run::write_run_outputs;
use super::{default_trials, EXIT_CHECK_FAILURES, EXIT_OK};
use crate::analysis::{count_failures, run_suite, Suite};
use crate::error::{Error, Result};
use crate::optimizer::{run, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRun {
    pub name: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub suite: String,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// Many runs and checks in one file:
/// `{"name", "runs": [{"name", ...run config}], "checks": [...], "outputs"}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentManifest {
    pub name: String,
    pub runs: Vec<NamedRun>,
    pub checks: Vec<CheckSpec>,
    pub outputs: PathBuf,
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::config(key, "missing"))
}

impl ExperimentManifest {
    pub fn from_value(v: Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::config("manifest", "expected a JSON object"))?;
        let name = field(obj, "name")?.as_str().ok_or_else(|| Error::config("name", "expected a string"))?.to_string();
        let outputs = obj
            .get("outputs")
            .map(|o| o.as_str().map(PathBuf::from).ok_or_else(|| Error::config("outputs", "expected a path string")))
            .transpose()?
            .unwrap_or_else(|| PathBuf::from(&name));
        let raw_runs = field(obj, "runs")?.as_array().ok_or_else(|| Error::config("runs", "expected a list"))?;
        let mut seen = HashSet::new();
        let mut runs = Vec::with_capacity(raw_runs.len());
        for (i, r) in raw_runs.iter().enumerate() {
            let mut r = r.clone();
            let obj = r.as_object_mut().ok_or_else(|| Error::config(format!("runs[{i}]"), "expected an object"))?;
            let run_name = obj
                .remove("name")
                .and_then(|n| n.as_str().map(str::to_string))
                .ok_or_else(|| Error::config(format!("runs[{i}].name"), "missing"))?;
            if run_name.is_empty() || run_name.contains(['/', '\\']) || run_name.starts_with('.') {
                return Err(Error::config(format!("runs[{i}].name"), format!("`{run_name}` is not a plain file name")));
            }
            if !seen.insert(run_name.clone()) {
                return Err(Error::config(format!("runs[{i}].name"), format!("duplicate name `{run_name}`")));
            }
            let config = RunConfig::from_json(&r.to_string()).map_err(|e| match e {
                Error::InvalidConfig { field, message } => Error::config(format!("runs[{i}].{field}"), message),
                other => other,
            })?;
            runs.push(NamedRun { name: run_name, config });
        }
        let checks: Vec<CheckSpec> = match obj.get("checks") {
            None => Vec::new(),
            Some(c) => serde_json::from_value(c.clone()).map_err(|e| Error::config("checks", e.to_string()))?,
        };
        let mut suites = HashSet::new();
        for (i, c) in checks.iter().enumerate() {
            let s: Suite = c
                .suite
                .parse()
                .map_err(|_| Error::config(format!("checks[{i}].suite"), format!("unknown suite `{}`", c.suite)))?;
            if !suites.insert(s) {
                return Err(Error::config(format!("checks[{i}].suite"), "each suite may appear once"));
            }
        }
        Ok(ExperimentManifest { name, runs, checks, outputs })
    }
}

/// Runs every entry in parallel. Traces go to `<dir>/<name>.csv`, suite
/// reports to `<dir>/<suite>.jsonl`.
pub(super) fn run_manifest(
    m: &ExperimentManifest,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| m.outputs.clone());
    fs::create_dir_all(&dir)?;
    let written: Vec<PathBuf> = m
        .runs
        .par_iter()
        .map(|r| {
            let trace = run(&r.config)?;
            let csv = dir.join(format!("{}.csv", r.name));
            write_run_outputs(&trace, &csv)?;
            Ok(csv)
        })
        .collect::<Result<_>>()?;
    let mut failures = 0;
    for c in &m.checks {
        let suite: Suite = c.suite.parse()?;
        let reports = run_suite(suite, c.trials.unwrap_or_else(|| default_trials(suite)), c.seed)?;
        failures += count_failures(&reports);
        let mut text = String::new();
        for r in &reports {
            text.push_str(&r.to_json_line());
            text.push('\n');
        }
        let path = dir.join(format!("{suite}.jsonl"));
        fs::write(&path, text)?;
        writeln!(
            out,
            "{}",
            serde_json::json!({"suite": suite.as_str(), "checks": reports.len(), "failures": count_failures(&reports)})
        )?;
    }
    for p in &written {
        writeln!(err, "wrote {}", p.display())?;
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_CHECK_FAILURES })
}
