use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aui-rl"));
    c.env("SOURCE_DATE_EPOCH", "1700000000").env_remove("AUI_RL_LOG");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&o.stdout))
    })
}

/// Exactly one stderr line, holding `{"error": .., "message": ..}`.
fn error_json(o: &Output) -> Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

fn small() -> String {
    configs().join("small.json").display().to_string()
}

fn train_small(out: &Path, episodes: &str) -> Output {
    run(&[
        "train", "--config", &small(), "--sigma", "1.0", "--seed", "42", "--episodes", episodes,
        "--out", out.to_str().unwrap(),
    ])
}

#[test]
fn train_writes_table_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run1");
    let o = train_small(&out, "400");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["qtable.bin", "metrics.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
    assert!(csv.starts_with("episode,steps,score,terminal_alignment,epsilon,ma_steps,ma_score\n"));
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["episodes"], 400);
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary, stdout_json(&o));
    let leftovers: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 3, "{leftovers:?}");
}

#[test]
fn identical_invocations_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train_small(&a, "300").status.success());
    assert!(train_small(&b, "300").status.success());
    for f in ["qtable.bin", "metrics.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eval_and_inspect_read_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(train_small(&out, "2000").status.success());
    let table = out.join("qtable.bin").display().to_string();

    let o = run(&["eval", "--config", &small(), "--qtable", &table, "--episodes", "50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["phase"], "eval");
    assert_eq!(v["episodes"], 50);
    assert_eq!(fs::read_to_string(out.join("eval_metrics.csv")).unwrap().lines().count(), 51);

    let o = run(&["inspect", "--qtable", &table, "--state", "layout=list,theme=dark|layout=grid,theme=dark"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let row = v["q_row"].as_array().unwrap();
    assert_eq!(row.len(), 6);
    assert_eq!(row[5]["action"], "no_op");
    let best = v["action_index"].as_u64().unwrap() as usize;
    let max = row.iter().map(|r| r["q_value"].as_f64().unwrap()).fold(f64::MIN, f64::max);
    assert_eq!(row[best]["q_value"].as_f64().unwrap(), max);
    assert_eq!(v["state"], "layout=list,theme=dark|layout=grid,theme=dark");

    let o = run(&["inspect", "--qtable", &table, "--state", "layout=list,theme=sepia|layout=grid,theme=dark"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "unknown_label");
}

#[test]
fn verify_exit_code_follows_the_report() {
    let o = run(&["verify", "--config", &small()]);
    let report = stdout_json(&o);
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(report["states"], 36);
    assert_eq!(
        passed,
        report["fraction_within"].as_f64().unwrap() >= report["required_fraction"].as_f64().unwrap()
    );
    if passed {
        assert_eq!(o.status.code(), Some(0));
    } else {
        assert_eq!(o.status.code(), Some(3));
        assert_eq!(error_json(&o)["error"], "verify_failed");
    }

    // A bonus that ignores the step counter makes the reduced domain exactly learnable.
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_slice(&fs::read(small()).unwrap()).unwrap();
    doc["reward"]["bonus_step_threshold"] = 25.into();
    let cfg = dir.path().join("flat.json");
    fs::write(&cfg, doc.to_string()).unwrap();
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(stdout_json(&o)["passed"], true);
}

#[test]
fn sweep_writes_one_directory_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep", "--config", &small(), "--sigmas", "0,0.5,1", "--episodes", "300", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for s in ["sigma_0", "sigma_0.5", "sigma_1"] {
        for f in ["qtable.bin", "metrics.csv", "eval_metrics.csv", "summary.json"] {
            assert!(out.join(s).join(f).is_file(), "{s}/{f}");
        }
    }
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 3);
}

#[test]
fn fit_reward_writes_a_loadable_table() {
    let dir = tempfile::tempdir().unwrap();
    let log = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets/paper_interactions.csv");
    let out = dir.path().join("table.json");
    let o = run(&["fit-reward", "--interactions", log.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(table["table"].as_object().unwrap().len(), 10);
    assert_eq!(table["modeled_variables"], serde_json::json!(["layout", "theme"]));

    let run_dir = dir.path().join("run");
    let o = run(&[
        "train", "--reward-table", out.to_str().unwrap(), "--sigma", "0", "--episodes", "200", "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failures_are_one_json_line_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");

    let o = run(&["train", "--config", "/nonexistent/cfg.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "io");
    assert!(!out.exists());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"domain": {"name": "d", "variables": []}}"#).unwrap();
    let o = run(&["train", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "config");
    assert!(!out.exists());

    let o = run(&["train", "--out", out.to_str().unwrap(), "--sigma", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let o = run(&["train", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "usage");

    let o = run(&["bogus-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn table_from_another_domain_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(train_small(&out, "100").status.success());
    let paper = configs().join("paper.json").display().to_string();
    let table = out.join("qtable.bin").display().to_string();
    let o = run(&["eval", "--config", &paper, "--qtable", &table]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "hash_mismatch");
    let o = run(&["serve", "--config", &paper, "--qtable", &table, "--port", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "hash_mismatch");
}
