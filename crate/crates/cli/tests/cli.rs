use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn steersmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steersmc"))
        .args(args)
        .env_remove("STEERSMC_PLANNER_ENDPOINT")
        .env_remove("STEERSMC_MODEL_ENDPOINT")
        .output()
        .unwrap()
}

/// Run the toy suite and return the record file contents.
fn run_toy(dir: &Path, name: &str, extra: &[&str]) -> String {
    let f = fixtures();
    let out = dir.join(name);
    let tasks = f.join("toy/toy.tasks.jsonl");
    let plans = f.join("plans");
    let model = format!("table:{}", f.join("toy/toy.model.json").display());
    let mut args = vec![
        "run",
        "--tasks",
        tasks.to_str().unwrap(),
        "--plans",
        plans.to_str().unwrap(),
        "--model",
        &model,
        "--out",
        out.to_str().unwrap(),
        "-N",
        "32",
    ];
    args.extend_from_slice(extra);
    let o = steersmc(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

fn records(text: &str) -> Vec<Value> {
    text.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_toy(dir.path(), "a.jsonl", &["--seed", "5"]);
    let b = run_toy(dir.path(), "b.jsonl", &["--seed", "5"]);
    let c = run_toy(dir.path(), "c.jsonl", &["--seed", "5", "--jobs", "8"]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, run_toy(dir.path(), "d.jsonl", &["--seed", "6"]));
    assert_eq!(records(&a).len(), 8);
}

#[test]
fn records_carry_outcomes_and_typed_errors() {
    let dir = tempfile::tempdir().unwrap();
    let recs = records(&run_toy(dir.path(), "r.jsonl", &["--method", "rejection"]));
    let by_id = |id: &str| recs.iter().find(|r| r["task_id"] == id).unwrap().clone();
    let never = by_id("never-1");
    assert_eq!(never["error"]["kind"], "AllParticlesDead");
    assert_eq!(never["passed"], false);
    assert_eq!(by_id("bad-mask-1")["error"]["kind"], "MaskEmpty");
    assert_eq!(by_id("bad-loop-1")["error"]["kind"], "StepBudgetExceeded");
    let g = by_id("glasgow-1");
    assert!(g["error"].is_null());
    assert_eq!(g["passed"], true);
    assert_eq!(g["method"], "rejection");
    assert!(recs.iter().all(|r| r["n_particles"] == 32));
}

#[test]
fn eval_is_reproducible_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_toy(dir.path(), "smc.jsonl", &[]);
    run_toy(dir.path(), "is.jsonl", &["--method", "importance"]);
    let files = [dir.path().join("smc.jsonl"), dir.path().join("is.jsonl")];
    let csv = dir.path().join("agg.csv");
    let eval = |csv: &Path| {
        steersmc(&[
            "eval",
            files[0].to_str().unwrap(),
            files[1].to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
        ])
    };
    let first = eval(&csv);
    assert!(first.status.success());
    let table = String::from_utf8(first.stdout).unwrap();
    assert!(table.contains("smc") && table.contains("importance") && table.contains("sent_02"));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("task_type,method"));
    let again = eval(&dir.path().join("agg2.csv"));
    assert_eq!(table, String::from_utf8(again.stdout).unwrap());
    assert_eq!(
        csv_text,
        std::fs::read_to_string(dir.path().join("agg2.csv")).unwrap()
    );
}

#[test]
fn trace_renders_csv_and_html() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let recs = records(&run_toy(
        dir.path(),
        "t.jsonl",
        &["--trace", traces.to_str().unwrap()],
    ));
    let run_id = recs[0]["run_id"].as_str().unwrap();
    let prefix = dir.path().join("view");
    let o = steersmc(&[
        "trace",
        "--dir",
        traces.to_str().unwrap(),
        "--run-id",
        run_id,
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("view.csv")).unwrap();
    assert!(csv.starts_with("step,particle,weight,ess,resampled,text"));
    assert!(csv.lines().count() > 32);
    let html = std::fs::read_to_string(dir.path().join("view.html")).unwrap();
    assert!(html.contains("<svg") && !html.contains("<script"));
}

#[test]
fn generate_is_deterministic() {
    let a = steersmc(&[
        "generate", "--family", "sent_02", "--count", "4", "--seed", "9",
    ]);
    let b = steersmc(&[
        "generate", "--family", "sent_02", "--count", "4", "--seed", "9",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes() {
    let f = fixtures();
    let tasks = f.join("toy/toy.tasks.jsonl");
    let plans = f.join("plans");
    // no model anywhere
    let o = steersmc(&[
        "run",
        "--tasks",
        tasks.to_str().unwrap(),
        "--plans",
        plans.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(steersmc(&["run", "--bogus"]).status.code(), Some(2));
    let model = format!("table:{}", f.join("toy/toy.model.json").display());
    let o = steersmc(&[
        "run",
        "--tasks",
        "/nonexistent/tasks.jsonl",
        "--plans",
        plans.to_str().unwrap(),
        "--model",
        &model,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(
        steersmc(&["generate", "--family", "no_such_family"])
            .status
            .code(),
        Some(2)
    );
}
