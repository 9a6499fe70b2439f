use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn dtkg(args: &[&str]) -> Output {
    dtkg_env(args, &[])
}

fn dtkg_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dtkg"));
    cmd.args(args).env("RUST_LOG", "error");
    for (k, v) in env {
        cmd.env(k, v);
    }
    // Keep stray DTKG_* variables from the caller out of the run.
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("DTKG_")) {
        if !env.iter().any(|(e, _)| *e == k) {
            cmd.env_remove(k);
        }
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config() -> String {
    fixtures().join("config.toml").display().to_string()
}

/// Trailing JSON document of a command's standard output.
fn trailing_json(out: &str) -> Value {
    let start = out.find("\n{").map_or(0, |i| i + 1);
    serde_json::from_str(&out[start..]).unwrap_or_else(|e| panic!("{e}: {out}"))
}

const CHAINED: &str = "When was the wife of the director of Inception born?";

#[test]
fn eval_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let dataset = fixtures().join("dataset.jsonl");
    let o = dtkg(&[
        "eval",
        "--config",
        &config(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("EM%"));

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let records = r["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(r["aggregate"]["n"], 2);
    assert_eq!(r["aggregate"]["skipped"], 1);
    let em: Vec<u64> = records.iter().map(|x| x["em"].as_u64().unwrap()).collect();
    assert_eq!(em, [1, 1]);
    assert_eq!(r["aggregate"]["em"], 1.0);
    assert_eq!(records[0]["track"], "chained");
    assert_eq!(records[1]["track"], "parallel");
}

#[test]
fn missing_dataset_exits_1() {
    let o = dtkg(&["eval", "--config", &config(), "--dataset", "/nonexistent/d.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(dtkg(&["answer", "--bogus"]).status.code(), Some(1));
    assert_eq!(dtkg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dtkg(&["answer"]).status.code(), Some(1));
    assert_eq!(dtkg(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "alpha = 3.0\n").unwrap();
    let o = dtkg(&["classify", "--config", cfg.to_str().unwrap(), "--question", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn answer_routes_chained_question() {
    let o = dtkg(&["answer", "--config", &config(), "--question", CHAINED]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = trailing_json(&stdout(&o));
    assert_eq!(a["track"], "chained");
    assert_eq!(a["text"], "1971-12-09");
    assert_eq!(a["supporting_paths"].as_array().unwrap().len(), 1);
    assert_eq!(a["supporting_paths"][0]["hops"].as_array().unwrap().len(), 3);
}

#[test]
fn classify_prints_track() {
    let o = dtkg(&["classify", "--config", &config(), "--question", "Who directed Inception?"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = trailing_json(&stdout(&o));
    assert_eq!(c["track"], "parallel");
    assert_eq!(c["fallback"], false);
}

#[test]
fn verify_reports_per_fact_results() {
    let o = dtkg(&["verify", "--config", &config(), "--question", "Who directed Inception?"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = trailing_json(&stdout(&o));
    assert_eq!(a["verification"][0]["status"], "verified");
}

#[test]
fn chain_prints_explored_tree() {
    let o = dtkg(&["chain", "--config", &config(), "--question", CHAINED]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("Inception [QF1]"), "{out}");
    assert!(out.contains("-[director]-> Christopher Nolan"), "{out}");
    assert!(out.contains("-[date of birth]-> 1971-12-09"), "{out}");
    assert!(out.contains("<- sufficient"), "{out}");
}

#[test]
fn denoise_lists_rule_drops() {
    let triples = fixtures().join("admin_triples.txt");
    let o = dtkg(&[
        "denoise",
        "--config",
        &config(),
        "--question",
        "Who directed Inception?",
        "--triples",
        triples.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("drop:rule")).count(), 3, "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("keep")).count(), 2, "{out}");
}

#[test]
fn environment_overrides_config() {
    let o = dtkg_env(
        &["answer", "--config", &config(), "--question", CHAINED],
        &[("DTKG_THETA_SEARCH", "0.99")],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = trailing_json(&stdout(&o));
    assert!(a["flags"].as_array().unwrap().iter().any(|f| f == "insufficient"));
    assert!(a.get("supporting_paths").is_none());
}

#[test]
fn unreachable_endpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("live.toml");
    std::fs::write(
        &cfg,
        format!(
            "kg_provider = \"sparql\"\nsparql_url = \"http://127.0.0.1:9/sparql\"\nsparql_retries = 0\ntimeout_secs = 5\nstub_script = {:?}\n",
            fixtures().join("script.json").display().to_string()
        ),
    )
    .unwrap();
    let script = fixtures().join("script.json");
    let o = dtkg(&[
        "answer",
        "--config",
        cfg.to_str().unwrap(),
        "--stub-script",
        script.to_str().unwrap(),
        "--question",
        CHAINED,
    ]);
    assert_eq!(o.status.code(), Some(2), "{}\n{}", stdout(&o), stderr(&o));
}
