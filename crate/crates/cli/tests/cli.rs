use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn acl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acl"))
        .current_dir(dir)
        .args(["--runs-dir", dir.to_str().unwrap()])
        .args(args)
        .env_remove("ACL_THREADS")
        .output()
        .expect("binary runs")
}

fn record_path(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "\n").unwrap();
    let out = acl(dir.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    let out = acl(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = acl(dir.path(), &["riesz", "--family", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string());
}

#[test]
fn weak_type_on_the_model_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("curve.json"), r#"{"preset":"moment","dim":3}"#).unwrap();
    std::fs::write(d.join("e.json"), r#"{"balls":[{"center":[0.02,-0.03,0.01],"radius":0.5}]}"#).unwrap();
    std::fs::write(d.join("f.json"), r#"{"superlevel":0.4}"#).unwrap();
    let out = acl(d, &["refine", "--curve", "curve.json", "--E", "e.json", "--F", "f.json", "--delta", "0.01", "--out", "tower.json"]);
    let rec = read_json(&record_path(&out));
    assert_eq!(rec["outputs"]["checks"]["imagesInSets"], Value::Bool(true));
    let tower = read_json(&d.join("tower.json"));
    for key in ["base", "levels", "precolors", "stats"] {
        assert!(!tower["outcome"]["tower"][key].is_null(), "tower file lacks {key}");
    }
    assert!(tower["outcome"]["layout"]["case"].is_string());

    let out = acl(d, &["weak-type", "--tower", "tower.json", "--out", "chain_report.json"]);
    record_path(&out);
    let chain = read_json(&d.join("chain_report.json"));
    let c = chain["modelConstant"].as_f64().unwrap();
    assert!(c > 0.0 && c.is_finite(), "model constant {c}");
}

#[test]
fn weak_type_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = acl(dir.path(), &["weak-type", "--dim", "3", "--stream", "1", "--samples", "8"]);
    let rec = read_json(&record_path(&out));
    let c = rec["outputs"]["chainReport"]["modelConstant"].as_f64().unwrap();
    assert!(c > 0.0);
    assert!(rec["timing"]["weak-type"].as_f64().unwrap() >= 0.0);
}

#[test]
fn diagram_artifacts_mark_the_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let out = acl(
        dir.path(),
        &["riesz-diagram", "--lattice", "5", "--families", "ballB", "--res", "128", "--nr", "16", "--max-nodes", "3000"],
    );
    let rec = record_path(&out);
    let run = rec.parent().unwrap();
    let svg = std::fs::read_to_string(run.join("diagram.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("(0.500,0.167)") && svg.contains("(0.667,0.333)"));
    let csv = std::fs::read_to_string(run.join("diagram.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 25);
    assert!(csv.starts_with("u,v,region"));
}

#[test]
fn same_config_same_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "command = \"refine\"\nseed = 3\n\n[refine]\ndim = 2\nstream = 2\n").unwrap();
    let a = read_json(&record_path(&acl(dir.path(), &["run", cfg.to_str().unwrap()])));
    let other = tempfile::tempdir().unwrap();
    let b = read_json(&record_path(&acl(other.path(), &["run", cfg.to_str().unwrap()])));
    assert_eq!(a["id"], b["id"]);
    assert_eq!(a["outputs"], b["outputs"]);
    // The resolved config in the record replays to the same run.
    let replay = other.path().join("replay.json");
    std::fs::write(&replay, serde_json::to_string(&a["config"]).unwrap()).unwrap();
    let c = read_json(&record_path(&acl(other.path(), &["run", replay.to_str().unwrap()])));
    assert_eq!(a["outputs"], c["outputs"]);
}

#[test]
fn truncation_table_copy() {
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("table.json");
    let out = acl(dir.path(), &["truncation-table", "--max-degree", "2", "--max-k", "1", "--out", copy.to_str().unwrap()]);
    let rec = read_json(&record_path(&out));
    assert_eq!(read_json(&copy), rec["outputs"]);
}
