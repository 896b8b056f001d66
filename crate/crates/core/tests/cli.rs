//! End-to-end tests of the `pgrates` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use pgrates::cli::{exit_code, main_with_args, EXIT_NUMERICAL, EXIT_USAGE};
use pgrates::optimizer::CSV_HEADER;
use pgrates::Error;

fn pgrates(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgrates")).args(args).env("PGRATES_THREADS", "2").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout).lines().map(|l| serde_json::from_str(l).expect("JSON line")).collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn bandit_shorthand_run_writes_one_row_per_iteration() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"rewards":[1.0,0.9,0.1],"method":{"kind":"plain"},"iterations":10000}"#);
    let csv = dir.path().join("trace.csv");
    let o = pgrates(&["run", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 10_001);
    assert!(lines[1].starts_with("1,"));
    assert!(lines[10_000].starts_with("10000,"));

    let summary = read_json(&dir.path().join("trace.summary.json"));
    assert_eq!(summary["iterations_run"], 10_000);
    assert_eq!(summary["rate_model"], "power");
    assert!(summary["c_running"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["config"]["iterations"], 10_000);
}

#[test]
fn invalid_discount_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"num_states":1,"num_actions":2,"gamma":1.0,"rewards":[[0.1,0.2]],"transitions":[[[1.0],[1.0]]],
            "method":{"kind":"plain"},"iterations":10}"#,
    );
    let o = pgrates(&["run", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn malformed_json_reports_its_position() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", "{\n  \"rewards\": [1.0, 0.5,\n}");
    let o = pgrates(&["run", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn entropy_run_summary_has_exponential_rate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"rewards":[1.0,0.9,0.1],"method":{"kind":"entropy","tau":0.2},"iterations":2000}"#,
    );
    let csv = dir.path().join("e.csv");
    let o = pgrates(&["run", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary = stdout_lines(&o).remove(0);
    assert_eq!(summary["rate_model"], "exponential");
    assert!(summary["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(read_json(&dir.path().join("e.summary.json"))["rate_model"], "exponential");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem":{"random_mdp":{"num_states":3,"num_actions":3,"gamma":0.5,"seed":9}},
            "method":{"kind":"two_stage","tau":0.1},"init":{"random":{"seed":4}},"iterations":3000}"#,
    );
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        assert_eq!(code(&pgrates(&["run", "--config", &cfg, "--out", csv.to_str().unwrap()])), 0);
        outputs.push(fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(String::from_utf8_lossy(&outputs[0]).starts_with(CSV_HEADER));
}

#[test]
fn manifest_runs_every_entry() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let manifest = format!(
        r#"{{"name":"small","outputs":{:?},
            "runs":[{{"name":"plain","rewards":[0.9,0.2],"method":{{"kind":"plain"}},"iterations":50}},
                    {{"name":"soft","rewards":[0.9,0.2],"method":{{"kind":"entropy","tau":0.5}},"iterations":50}}],
            "checks":[{{"suite":"fixtures"}},{{"suite":"spectrum","trials":20,"seed":3}}]}}"#,
        out.to_str().unwrap()
    );
    let cfg = write(dir.path(), "m.json", &manifest);
    let o = pgrates(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["plain.csv", "plain.summary.json", "soft.csv", "soft.summary.json", "fixtures.jsonl", "spectrum.jsonl"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let lines = stdout_lines(&o);
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l["failures"] == 0));
}

#[test]
fn manifest_rejects_duplicate_names() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"name":"dup","runs":[{"name":"a","rewards":[1,0],"method":{"kind":"plain"},"iterations":5},
                                 {"name":"a","rewards":[1,0],"method":{"kind":"plain"},"iterations":5}]}"#,
    );
    let o = pgrates(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("runs[1].name"));
}

#[test]
fn verify_fixtures_passes() {
    let o = pgrates(&["verify", "fixtures"]);
    assert_eq!(code(&o), 0);
    let lines = stdout_lines(&o);
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l["pass"] == true));
    assert!(lines.iter().any(|l| l["name"] == "escape_threshold_ratio"));
}

#[test]
fn verify_gradcheck_with_seed() {
    let o = pgrates(&["verify", "--suite", "gradcheck", "--trials", "100", "--seed", "7"]);
    assert_eq!(code(&o), 0);
    let lines = stdout_lines(&o);
    assert_eq!(lines.len(), 100);
    assert!(lines.iter().all(|l| l["pass"] == true));
}

#[test]
fn verify_with_no_trials_is_vacuous() {
    let o = pgrates(&["verify", "smoothness", "--trials", "0"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&pgrates(&["verify", "bogus"])), 2);
    assert_eq!(code(&pgrates(&["reproduce", "fig9"])), 2);
    assert_eq!(code(&pgrates(&["frobnicate"])), 2);
    assert_eq!(code(&pgrates(&["verify"])), 2);
    assert_eq!(code(&pgrates(&["run", "--config", "/nonexistent/config.json", "--out", "x.csv"])), 2);
    assert_eq!(code(&pgrates(&["--help"])), 0);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_pgrates"))
        .args(["verify", "fixtures"])
        .env("PGRATES_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("PGRATES_THREADS"));
}

#[test]
fn numerical_failures_map_to_exit_three() {
    let e = Error::NonFinite { t: 12, detail: "logit overflow".into() };
    assert_eq!(exit_code(&e), EXIT_NUMERICAL);
    assert!(e.to_string().contains("t = 12"));
    assert_eq!(exit_code(&Error::InvalidInput("x".into())), EXIT_USAGE);
}

#[test]
fn reproduce_fig2_desk() {
    let dir = TempDir::new().unwrap();
    let o = pgrates(&["reproduce", "--figure", "fig2", "--scale", "desk", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(&dir.path().join("fig2_summary.json"));
    let slope = summary["results"]["power_fit"]["slope"].as_f64().unwrap();
    assert!((-1.1..=-0.9).contains(&slope), "slope {slope}");
    let header = fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
    assert!(header.starts_with(CSV_HEADER));
}

#[test]
fn reproduce_fig3_desk_is_linear_on_a_log_scale() {
    let dir = TempDir::new().unwrap();
    let o = pgrates(&["reproduce", "fig3", "--scale", "desk", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary = read_json(&dir.path().join("fig3_summary.json"));
    assert!(summary["results"]["exponential_fit"]["r_squared"].as_f64().unwrap() >= 0.99);
    let csv = fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[2].is_empty() && !row[5].is_empty(), "soft gap and zeta columns are filled");
}

#[test]
fn reproduce_fig4_desk_separates_the_methods() {
    let dir = TempDir::new().unwrap();
    let o = pgrates(&["reproduce", "fig4", "--scale", "desk", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let res = &read_json(&dir.path().join("fig4_summary.json"))["results"];
    assert_eq!(res["plain_reached"], true);
    assert_eq!(res["entropy_reached"], true);
    assert!(res["ratio"].as_f64().unwrap() >= 100.0);
}

#[test]
fn reproduce_fig5_desk_reports_every_alpha() {
    let dir = TempDir::new().unwrap();
    let o = pgrates(&["reproduce", "fig5", "--scale", "desk", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let res = read_json(&dir.path().join("fig5_summary.json"));
    let runs = res["results"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    assert!(runs.iter().all(|r| r["power_fit"]["slope"].as_f64().unwrap() < 0.0));
}

#[test]
fn in_process_entry_point_matches_binary() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let c = main_with_args(["pgrates", "verify", "fixtures"], &mut out, &mut err);
    assert_eq!(c, 0);
    assert_eq!(out, pgrates(&["verify", "fixtures"]).stdout);
    assert!(String::from_utf8_lossy(&err).contains("0 failures"));
}
