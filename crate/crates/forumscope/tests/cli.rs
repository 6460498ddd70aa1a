mod common;

use std::path::Path;
use std::process::Command;

fn forumscope(store: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_forumscope"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_ingest_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, serde_json::to_vec(&common::small_spec(1)).unwrap()).unwrap();
    let csv = dir.path().join("forum.csv");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    forumscope(&store, &["synth", "--spec", &s(&spec), "--out", &s(&csv)]);
    forumscope(&store, &["ingest", "--input", &s(&csv), "--format", "csv", "--dataset", "small"]);
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"seed": 3, "top_k": 2}"#).unwrap();
    let run: serde_json::Value =
        serde_json::from_str(&forumscope(&store, &["run", "--dataset", "small", "--rank", "2", "--config", &s(&config)]))
            .unwrap();
    assert_eq!(run["status"], "done");
    let id = run["id"].as_str().unwrap();

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(store.join("runs").join(id).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(manifest["config"]["top_k"], 2);
    assert_eq!(manifest["config"]["rank"], 2);

    let out = dir.path().join("report");
    forumscope(&store, &["report", "--run", id, "--view", "tableview", "--format", "csv", "--out", &s(&out)]);
    let table = std::fs::read_to_string(out.join("tableview.csv")).unwrap();
    assert!(table.starts_with("forum_cid,n_users,type,top_threads,top_users,top_dates,dominant_topics\n"));
    forumscope(&store, &["report", "--run", id, "--view", "storyline", "--format", "html", "--out", &s(&out)]);
}
