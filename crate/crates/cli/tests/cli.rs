use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/demo")
}

fn tasksynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tasksynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The demo config with its workspace under `dir`.
fn config_in(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(demo().join("pipeline.yaml")).unwrap();
    let cache = demo().join("hub_cache.jsonl");
    let text = text
        .replace("workspace_root: run", "workspace_root: ws")
        .replace("../hub_cache.jsonl", cache.to_str().unwrap());
    let path = dir.join("pipeline.yaml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn replay_then_resume_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(dir.path());
    let transcript = demo().join("transcript.jsonl");
    let (c, t) = (config.to_str().unwrap(), transcript.to_str().unwrap());

    let first = tasksynth(&["run", "--config", c, "--replay", t]);
    assert!(first.status.success(), "{}", stderr(&first));
    let summary = stdout_json(&first);
    assert!(summary["funnel"]["validated"].as_u64().unwrap() >= 3);
    assert_eq!(summary["hub_requests"], 0);

    let again = tasksynth(&["run", "--config", c, "--replay", t]);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--resume"), "{}", stderr(&again));

    let resumed = tasksynth(&["run", "--config", c, "--replay", t, "--resume"]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    let resumed = stdout_json(&resumed);
    assert_eq!(resumed["provider_calls"], 0);
    assert_eq!(resumed["funnel"], summary["funnel"]);

    let sft = dir.path().join("ws/sft/train.jsonl");
    let stats = tasksynth(&["stats", sft.to_str().unwrap()]);
    assert!(stats.status.success(), "{}", stderr(&stats));
    assert_eq!(stdout_json(&stats)["records"], summary["funnel"]["sft_records"]);
    assert!(dir.path().join("ws/sft/train.jsonl.stats/turns.svg").is_file());
}

#[test]
fn curate_alone_aborts_on_missing_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(dir.path());
    let out = tasksynth(&["run", "--config", config.to_str().unwrap(), "--stages", "curate"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("stage `curate` aborted"), "{err}");
    assert!(err.contains("missing input") && err.contains("trajectories"), "{err}");
}

#[test]
fn unknown_stage_and_config_field_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(dir.path());
    let out = tasksynth(&["run", "--config", config.to_str().unwrap(), "--stages", "train"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("train"), "{}", stderr(&out));

    let bad = dir.path().join("bad.yaml");
    let text = std::fs::read_to_string(&config).unwrap();
    std::fs::write(&bad, text.replace("n_topics: 5", "n_topics: 5\nn_topicz: 6")).unwrap();
    let out = tasksynth(&["run", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("n_topicz"), "{}", stderr(&out));
}

#[test]
fn stats_names_the_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    let good = r#"{"task_id":"a","messages":[{"role":"system","content":"s"}],"token_count":3,"truncated":false}"#;
    std::fs::write(&path, format!("{good}\n{good}\n{{\"task_id\": \n")).unwrap();
    let out = tasksynth(&["stats", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("train.jsonl:3"), "{err}");
}

#[test]
fn stats_on_an_empty_file_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    let out_dir = dir.path().join("report");
    let out = tasksynth(&["stats", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout_json(&out);
    assert_eq!(report["records"], 0);
    assert_eq!(report["trajectories"], 0);
    assert_eq!(report["token_histogram"]["counts"], serde_json::json!([]));
    assert!(out_dir.join("stats.json").is_file());
}
