use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn gridflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridflow"))
        .arg("--store")
        .arg(data_root())
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const Q1: &str = "Count the capacitors installed on the South Hero feeder.";

#[test]
fn mock_query_prints_the_capacitor_count() {
    let o = gridflow(&["query", Q1]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "capacitor count: 2"), "{}", stdout(&o));
}

#[test]
fn query_ids_select_benchmark_queries() {
    let o = gridflow(&["--mode", "zeroctx", "query", "q1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("capacitor count: 2"));
}

#[test]
fn exhausted_session_exits_2() {
    let o = gridflow(&["--max-iterations", "2", "query", "tell me a joke"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no finished workflow after 2 iteration(s)"));
}

#[test]
fn config_errors_exit_1() {
    let o = gridflow(&["--config", "/definitely/missing.toml", "query", Q1]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: cannot read config"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "mode = \"sideways\"\n").unwrap();
    assert_eq!(gridflow(&["--config", bad.to_str().unwrap(), "query", Q1]).status.code(), Some(1));
    assert_eq!(gridflow(&["--mode", "full", "--k", "3", "query", Q1]).status.code(), Some(1));
    assert_eq!(gridflow(&["--bogus-flag", "query", Q1]).status.code(), Some(1));
}

#[test]
fn missing_key_variable_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("remote.toml");
    std::fs::write(
        &cfg,
        "profile = \"openai\"\n[endpoint]\nurl = \"http://127.0.0.1:9\"\nmodel = \"m\"\napi_key_env = \"GRIDFLOW_CLI_TEST_UNSET_KEY\"\n",
    )
    .unwrap();
    let o = gridflow(&["--config", cfg.to_str().unwrap(), "query", Q1]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("GRIDFLOW_CLI_TEST_UNSET_KEY"), "{}", stderr(&o));
}

#[test]
fn json_and_trace_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridflow(&["--json", "--trace", "--out", dir.path().to_str().unwrap(), "query", "q2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["outcome"]["outcome"], "completed");
    assert_eq!(v["iterations"], 1);
    let trace: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(trace["transcript"].as_array().unwrap().len(), 1);
}

#[test]
fn artifacts_are_written_under_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridflow(&["--out", dir.path().to_str().unwrap(), "query", "q9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let listed: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("artifact: ")).collect();
    assert!(!listed.is_empty(), "{}", stdout(&o));
    for a in listed {
        assert!(Path::new(a).is_file(), "{a}");
        assert!(Path::new(a).starts_with(dir.path()));
    }
}

#[test]
fn script_profile_replays_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("replies.json");
    std::fs::write(
        &script,
        r#"[
            [{"function": "run_powerflow", "args": {"network": "active"}}],
            [{"function": "load_network", "args": {"path": "two_bus.json"}},
             {"function": "total_load", "args": {"network": "active"}}],
            "WORKFLOW_COMPLETE"
        ]"#,
    )
    .unwrap();
    let o = gridflow(&["--profile", "script", "--script", script.to_str().unwrap(), "query", "how much load?"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("total load: p="), "{}", stdout(&o));
    assert!(stderr(&o).starts_with("2 iteration(s), 3 function call(s)"), "{}", stderr(&o));
}

#[test]
fn repl_runs_each_line_as_a_fresh_session() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_gridflow"))
        .arg("--store")
        .arg(data_root())
        .arg("repl")
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"q1\n\nq1\nquit\nq2\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("capacitor count: 2").count(), 2);
    assert!(!stdout(&o).contains("total load"));
    assert_eq!(stderr(&o).matches("1 iteration(s), 2 function call(s)").count(), 2);
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"[{"function": "load_network", "args": {"path": "south_hero.json"}}]"#).unwrap();
    let o = gridflow(&["validate", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "valid: 1 step(s)");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"function": "run_powerflow", "args": {}}, {"function": "fly", "args": {}}]"#).unwrap();
    let o = gridflow(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("step 1 run_powerflow: missing required parameter network"));
    assert!(stdout(&o).contains("step 2 fly: unknown function"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "[{").unwrap();
    assert_eq!(gridflow(&["validate", broken.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn tools_lists_every_function() {
    let o = gridflow(&["tools"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("load_network(path: string)"));
    let o = gridflow(&["--json", "tools"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 19);
}

#[test]
fn bench_writes_tables_and_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let run = || gridflow(&["--out", out.to_str().unwrap(), "bench", "--jobs", "3"]);
    let o = run();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("table.md")).unwrap();
    assert!(table.lines().nth(2).unwrap().starts_with("| mock | 1.00 | 1.00 | 1.00, 1.00 |"), "{table}");
    assert!(out.join("table.csv").is_file() && out.join("per_query.md").is_file());
    let records = out.join("records.jsonl");
    let first = std::fs::read_to_string(&records).unwrap();
    assert_eq!(first.lines().count(), 200);

    let kept: String = first.lines().take(120).map(|l| format!("{l}\n")).collect();
    std::fs::write(&records, kept + "{\"model\":\"mock\",\"mo").unwrap();
    let o = run();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&records).unwrap(), first);
    assert_eq!(std::fs::read_to_string(out.join("table.md")).unwrap(), table);
}

#[test]
fn bench_input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridflow(&["--out", dir.path().to_str().unwrap(), "bench", "/missing/spec.json"]);
    assert_eq!(o.status.code(), Some(1));
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"attempts": 0, "modes": ["full"], "models": ["mock"], "queries": []}"#).unwrap();
    assert_eq!(gridflow(&["bench", spec.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn bench_with_injected_faults_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridflow(&["--out", dir.path().to_str().unwrap(), "--json", "bench", "--inject-faults"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["records"], 200);
    let text = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert!(text.lines().all(|l| l.contains("\"success\":true") && l.contains("\"iterations\":2")));
}
