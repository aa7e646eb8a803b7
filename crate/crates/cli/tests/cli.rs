use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pgn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgn"))
        .args(args)
        .current_dir(cwd)
        .env("PGN_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let last = text.lines().last().expect("stderr non-empty");
    serde_json::from_str(last).expect("stderr ends with a JSON error")
}

const SPEC: &str = r#"
kind = "dsu"
master_seed = 0
splits = [
    { name = "train", episodes = 3, n = 5, ops = 4 },
    { name = "val", episodes = 2, n = 5, ops = 4 },
    { name = "test_10", episodes = 2, n = 10, ops = 6 },
]
"#;

fn small_dataset(dir: &Path) {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let o = pgn(
        &[
            "generate",
            "--kind",
            "dsu",
            "--spec",
            "spec.toml",
            "--out",
            "data",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_then_validate_is_clean() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path());
    let o = pgn(&["validate", "--data", "data"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["episodes"], 7);
    assert_eq!(v["violations"], 0);
}

#[test]
fn validate_flags_tampered_answers() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path());
    let path = tmp.path().join("data/val.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let y = lines[0]["steps"][0]["y"].as_u64().unwrap();
    lines[0]["steps"][0]["y"] = Value::from(1 - y);
    let out: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&path, out).unwrap();
    let o = pgn(&["validate", "--data", "data"], tmp.path());
    assert_eq!(o.status.code(), Some(6));
    assert_eq!(stderr_json(&o)["error"], "check_failed");
}

#[test]
fn train_eval_rollout_credit_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    fs::write(
        dir.join("exp.toml"),
        "version = 1\nseeds = [0, 1]\n[dataset]\nkind = \"dsu\"\n[model]\nlatent_dim = 4\n[train]\nepochs = 2\n",
    )
    .unwrap();
    let o = pgn(
        &[
            "train", "--config", "exp.toml", "--data", "data", "--out", "run",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert!(report["splits"]["test_10"]["query_f1"]["mean"].is_f64());
    for f in [
        "manifest.json",
        "report.json",
        "seed_0/model.ckpt",
        "seed_1/history.jsonl",
    ] {
        assert!(dir.join("run").join(f).is_file(), "missing {f}");
    }
    let history = fs::read_to_string(dir.join("run/seed_0/history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);

    let o = pgn(
        &[
            "eval",
            "--checkpoint",
            "run/seed_0/model.ckpt",
            "--data",
            "data",
            "--report",
            "ev.json",
        ],
        dir,
    );
    assert!(o.status.success());
    let ev: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("ev.json")).unwrap()).unwrap();
    assert_eq!(ev, stdout_json(&o));
    assert!(ev["splits"]["val"]["pointer_accuracy"].is_f64());

    let o = pgn(
        &[
            "rollout",
            "--checkpoint",
            "run/seed_0/model.ckpt",
            "--pathological",
            "6",
            "--dot",
            "dots",
        ],
        dir,
    );
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["steps"], 5);
    assert!(dir.join("dots/pathological_truth_0_4.dot").is_file());
    assert_eq!(
        fs::read_to_string(dir.join("dots/structure.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let o = pgn(
        &[
            "credit",
            "--checkpoint",
            "run/seed_0/model.ckpt",
            "--data",
            "data",
            "--split",
            "val",
        ],
        dir,
    );
    assert!(o.status.success());
    let c = &stdout_json(&o)["splits"]["val"];
    let total = c["operated"].as_f64().unwrap()
        + c["relevant"].as_f64().unwrap()
        + c["irrelevant"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn learned_pointer_source_writes_phase_one_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    fs::write(
        dir.join("exp.toml"),
        "version = 1\n[dataset]\nkind = \"dsu\"\n[model]\nvariant = \"fixed_ptrs\"\nlatent_dim = 4\npointer_source = \"learned\"\n[train]\nepochs = 1\n",
    )
    .unwrap();
    let o = pgn(
        &[
            "train", "--config", "exp.toml", "--data", "data", "--out", "run",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("run/seed_0/phase1.ckpt").is_file());
    let ptrs = fs::read_to_string(dir.join("run/seed_0/pointers.jsonl")).unwrap();
    // 3*4 train + 2*4 val + 2*6 test steps
    assert_eq!(ptrs.lines().count(), 32);
    let o = pgn(
        &[
            "eval",
            "--checkpoint",
            "run/seed_0/model.ckpt",
            "--pointers",
            "run/seed_0/phase1.ckpt",
            "--data",
            "data",
            "--report",
            "ev.json",
        ],
        dir,
    );
    assert!(o.status.success());
}

#[test]
fn gradcheck_passes_on_small_models() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pgn(&["gradcheck", "--latent", "4"], tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = stdout_json(&o);
    let rows = v["variants"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["pass"] == true));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pgn(&["train", "--bogus"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn malformed_config_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("bad.toml"),
        "version = 1\n[dataset]\nkind = \"heap\"\n",
    )
    .unwrap();
    let o = pgn(
        &["train", "--config", "bad.toml", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "malformed_config");
}

#[test]
fn config_version_mismatch_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("v2.toml"),
        "version = 2\n[dataset]\nkind = \"dsu\"\n",
    )
    .unwrap();
    let o = pgn(
        &["train", "--config", "v2.toml", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "version_mismatch");
}

#[test]
fn checkpoint_version_mismatch_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    fs::write(
        dir.join("exp.toml"),
        "version = 1\n[dataset]\nkind = \"dsu\"\n[model]\nlatent_dim = 2\n[train]\nepochs = 1\n",
    )
    .unwrap();
    assert!(pgn(
        &["train", "--config", "exp.toml", "--data", "data", "--out", "run"],
        dir
    )
    .status
    .success());
    let path = dir.join("run/seed_0/model.ckpt");
    let mut bytes = fs::read(&path).unwrap();
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = String::from_utf8(bytes[16..16 + header_len].to_vec()).unwrap();
    let bumped = header.replacen("\"version\":1", "\"version\":9", 1);
    assert_ne!(header, bumped);
    bytes.splice(16..16 + header_len, bumped.into_bytes());
    fs::write(&path, bytes).unwrap();
    let o = pgn(
        &[
            "eval",
            "--checkpoint",
            "run/seed_0/model.ckpt",
            "--data",
            "data",
            "--report",
            "r.json",
        ],
        dir,
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "version_mismatch");
}

#[test]
fn missing_files_exit_five() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pgn(&["validate", "--data", "nowhere"], tmp.path());
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(stderr_json(&o)["error"], "io");
}
