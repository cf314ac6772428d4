use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn kgzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgzsl"))
        .args(args)
        .env("KGZSL_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_json(p: &Path, v: &Value) {
    fs::write(p, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

/// Small synthetic corpus in `dir/data`; returns the generated run config.
fn synth(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("synth.json");
    write_json(
        &cfg,
        &json!({
            "profile": "synthetic",
            "synth": {"examples_per_class": 20},
            "optimizer": {"epochs": 2},
            "model": {"dims": [8, 8], "rank": 4},
        }),
    );
    let data = dir.join("data");
    let o = kgzsl(&["synth", "--config", path(&cfg), "--out", path(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    data.join("run.json")
}

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let out = dir.path().join("out");
    for cmd in ["train", "eval"] {
        let o = kgzsl(&[cmd, "--config", path(&run), "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let acc = metrics["micro"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest-train.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config"]["optimizer"]["epochs"], 2);
    assert_eq!(manifest["artifacts"]["fold0.checkpoint.json"].as_str().unwrap().len(), 64);
}

#[test]
fn train_twice_is_byte_identical_and_manifest_replays() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert!(kgzsl(&["train", "--config", path(&run), "--seed", "3", "--out", path(out)]).status.success());
    }
    for f in ["fold0.checkpoint.json", "fold0.log.json", "manifest-train.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = a.join("manifest-train.json");
    assert!(kgzsl(&["train", "--config", path(&manifest), "--out", path(&c)]).status.success());
    let artifacts = |d: &Path| {
        let m: Value = serde_json::from_str(&fs::read_to_string(d.join("manifest-train.json")).unwrap()).unwrap();
        m["artifacts"].clone()
    };
    assert_eq!(artifacts(&a), artifacts(&c));
}

#[test]
fn seed_flag_changes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(kgzsl(&["train", "--config", path(&run), "--seed", "1", "--out", path(&a)]).status.success());
    assert!(kgzsl(&["train", "--config", path(&run), "--seed", "2", "--out", path(&b)]).status.success());
    assert_ne!(
        fs::read(a.join("fold0.checkpoint.json")).unwrap(),
        fs::read(b.join("fold0.checkpoint.json")).unwrap()
    );
}

#[test]
fn empty_test_fold_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let data = run.parent().unwrap();
    let mut folds: Value = serde_json::from_str(&fs::read_to_string(data.join("folds.json")).unwrap()).unwrap();
    folds["folds"][0]["test"] = json!([]);
    write_json(&data.join("folds.json"), &folds);
    let o = kgzsl(&["eval", "--config", path(&run), "--out", path(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty test"));
}

#[test]
fn unknown_class_and_missing_file_name_the_culprit() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth(dir.path());
    let data = run.parent().unwrap();
    let mut folds: Value = serde_json::from_str(&fs::read_to_string(data.join("folds.json")).unwrap()).unwrap();
    folds["folds"][0]["test"].as_array_mut().unwrap().push(json!("class/missing"));
    write_json(&data.join("folds.json"), &folds);
    let o = kgzsl(&["train", "--config", path(&run), "--out", path(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("class/missing"));

    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&run).unwrap()).unwrap();
    cfg["paths"]["graph"] = json!("absent.tsv");
    write_json(&run, &cfg);
    let o = kgzsl(&["train", "--config", path(&run), "--out", path(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.tsv"));
}

#[test]
fn inconsistent_config_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write_json(&cfg, &json!({"profile": "vision", "model": {"dims": [16, 8]}}));
    let out = dir.path().join("out");
    let o = kgzsl(&["train", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn ingest_sample_and_gradcheck() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("kg.tsv"),
        "/r/IsA\t/c/en/dog\t/c/en/animal\ten\n/r/IsA\t/c/en/cat\t/c/en/animal\ten\n/r/HasA\t/c/en/dog\t/c/en/tail\ten\n/r/IsA\t/c/fr/chien\t/c/fr/animal\tfr\n",
    )
    .unwrap();
    fs::write(dir.path().join("vec.txt"), "dog 1 0\ncat 0 1\nanimal 0.5 0.5\n").unwrap();
    let cfg = dir.path().join("c.json");
    write_json(
        &cfg,
        &json!({
            "profile": "intent",
            "paths": {"graph": "kg.tsv", "embeddings": "vec.txt"},
            "ingest": {"lang_filter": "en"},
        }),
    );
    let out = dir.path().join("out");
    let o = kgzsl(&["ingest", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = fs::read_to_string(out.join("graph.tsv")).unwrap();
    assert!(tsv.contains("/c/en/dog") && !tsv.contains("chien"));
    assert_eq!(fs::read_to_string(out.join("features.txt")).unwrap().lines().count(), 4);

    assert!(kgzsl(&["sample", "--config", path(&cfg), "--out", path(&out)]).status.success());
    let hits: Value = serde_json::from_str(&fs::read_to_string(out.join("hits.json")).unwrap()).unwrap();
    let dog = hits.as_array().unwrap().iter().find(|t| t["center"] == "/c/en/dog").unwrap();
    let total: f64 = dog["neighbors"].as_array().unwrap().iter().map(|n| n["p"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);

    let o = kgzsl(&["gradcheck", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}
