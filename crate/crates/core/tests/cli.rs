use std::path::Path;
use std::process::{Command, Output};

fn rdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdiff")).args(args).output().unwrap()
}

fn write_config(dir: &Path, graph: &str) -> std::path::PathBuf {
    let path = dir.join("exp.json");
    let text = format!(
        r#"{{
  "manifold": {{"kind": "sphere", "d": 2}},
  "domain_diameter": 0.7,
  "graph": {graph},
  "problem": {{"kind": "karcher", "radius": 0.3, "m": 6}},
  "algorithm": {{"name": "diffusion_diminishing"}},
  "horizon": 40,
  "batch_size": 2,
  "seeds": [3, 4],
  "record_every": 5,
  "output_dir": "out"
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_traces_aggregate_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind": "cycle", "n": 5}"#);
    let out_dir = dir.path().join("res");
    let o = rdiff(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "trace_diffusion_diminishing_cycle5_3.csv",
        "trace_diffusion_diminishing_cycle5_4.csv",
        "aggregate_diffusion_diminishing_cycle5.csv",
        "summary.json",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let trace = std::fs::read_to_string(out_dir.join("trace_diffusion_diminishing_cycle5_3.csv")).unwrap();
    let ts: Vec<&str> = trace.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ts, ["1", "6", "11", "16", "21", "26", "31", "36", "41"]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(summary["bounds_certified"], true);
}

#[test]
fn seeds_override_and_config_relative_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind": "complete", "n": 4}"#);
    let o = rdiff(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert!(out.join("trace_diffusion_diminishing_complete4_9.csv").is_file());
    assert!(!out.join("trace_diffusion_diminishing_complete4_3.csv").exists());
}

#[test]
fn asymmetric_mixing_matrix_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.csv"), "0.5,0.5,0\n0.4,0.2,0.4\n0.1,0.3,0.6\n").unwrap();
    let cfg = write_config(dir.path(), r#"{"kind": "csv", "path": "w.csv"}"#);
    let o = rdiff(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("symmetry"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"manifold\": {\"kind\": \"sphere\", \"d\": 2},\n  \"stepsize\": 3\n}").unwrap();
    let o = rdiff(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stepsize") && err.contains("line 3"), "{err}");
}

#[test]
fn unknown_preset_lists_alternatives() {
    let o = rdiff(&["validate", "--preset", "er36/fixed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("er35/diminishing"));
}

#[test]
fn constants_for_flat_space() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.json");
    std::fs::write(
        &path,
        r#"{"manifold": {"kind": "euclidean", "d": 3}, "domain_diameter": 2.0,
            "graph": {"kind": "cycle", "n": 4}, "problem": {"kind": "karcher", "radius": 0.5, "m": 5},
            "algorithm": {"name": "diffusion_diminishing"}, "horizon": 10}"#,
    )
    .unwrap();
    let o = rdiff(&["constants", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    for line in ["C1 = 1", "C2 = 1", "C3 = 0", "C4 = 0", "s = 0.5"] {
        assert!(text.lines().any(|l| l == line), "missing {line:?} in\n{text}");
    }
}

#[test]
fn lemmas_subcommand_passes_small() {
    let o = rdiff(&["lemmas", "--preset", "desk/sphere-karcher", "--triples", "200", "--configs", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn presets_are_listed() {
    let o = rdiff(&["presets"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 17);
    assert!(text.contains("cycle100/fixed") && text.contains("desk/sphere-karcher"));
}
