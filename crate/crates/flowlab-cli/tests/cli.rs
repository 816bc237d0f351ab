//! End-to-end runs of the `flowlab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowlab"))
}

fn doc(dir: &TempDir, name: &str, field: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, format!(r#"{{"format":"flowlab-field","version":1,"field":{field}}}"#)).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn last_row(csv: &str) -> Vec<f64> {
    let line = csv.lines().filter(|l| !l.is_empty()).last().unwrap();
    line.split(',').filter(|c| !c.is_empty()).map(|c| c.parse().unwrap()).collect()
}

#[test]
fn build_round_trips_byte_identically() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "a.json", r#"{"node":"translate","offset":[1,2],"inner":{"node":"h"}}"#);
    let first = run(&["build", s(&src)]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let canon = dir.path().join("canon.json");
    fs::write(&canon, &first.stdout).unwrap();
    let second = run(&["build", s(&canon)]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn build_writes_pump_manifest() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "p.json", r#"{"node":"p0","m":150}"#);
    let manifest = dir.path().join("m.json");
    let out = dir.path().join("out.json");
    let o = run(&["build", s(&src), "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let t: f64 = m["pumps"][0]["t_times"].as_str().unwrap().parse().unwrap();
    assert!((t - 143.0).abs() < 1e-10, "{t}");
    assert!(fs::read_to_string(&out).unwrap().contains("\"p0\""));
}

#[test]
fn build_rejects_inverted_cutoff() {
    let dir = TempDir::new().unwrap();
    let src = doc(
        &dir,
        "bad.json",
        r#"{"node":"blend","weight":{"node":"box_cutoff","center":[0,0,0,0],"inner":200,"outer":100},
            "a":{"node":"v0"},"b":{"node":"p0","m":150}}"#,
    );
    let o = run(&["build", s(&src)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("inner"));
}

#[test]
fn build_reports_json_position() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("broken.json");
    fs::write(&p, "{\n  \"format\": \"flowlab-field\",\n  \"version\": 1,\n  \"field\": {\"node\": \"v0\"\n").unwrap();
    let o = run(&["build", s(&p)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn flow_of_upward_field() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "v0.json", r#"{"node":"v0"}"#);
    let o = run(&["flow", s(&src), "--start", "0,0,0,0", "--time", "3"]);
    assert_eq!(code(&o), 0);
    let row = last_row(&String::from_utf8(o.stdout).unwrap());
    let want = [3.0, 0.0, 0.0, 0.0, 3.0];
    for (a, b) in row.iter().zip(want) {
        assert!((a - b).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn flow_across_the_band() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "w.json", r#"{"node":"w"}"#);
    let o = run(&["--tol", "1e-12", "flow", s(&src), "--start=-95", "--time", "380"]);
    assert_eq!(code(&o), 0);
    let row = last_row(&String::from_utf8(o.stdout).unwrap());
    assert!((row[1] - 95.0).abs() < 1e-6, "{row:?}");
}

#[test]
fn flow_rejects_malformed_start() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "v0.json", r#"{"node":"v0"}"#);
    assert_eq!(code(&run(&["flow", s(&src), "--start", "0,x,0,0", "--time", "3"])), 2);
    assert_eq!(code(&run(&["flow", s(&src), "--start", "0,0", "--time", "3"])), 2);
}

#[test]
fn verify_selected_lemmas() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["verify", "P0-per", "SU-and-Phi-V0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = String::from_utf8(o.stderr).unwrap();
    assert!(lines.contains("PASS P0-per") && lines.contains("jet deviation"));
    assert!(lines.contains("PASS SU-and-Phi-V0"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["pass"], true);
}

#[test]
fn verify_unknown_key_lists_valid_keys() {
    let o = run(&["verify", "no-such-lemma"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("P0-per"));
}

#[test]
fn verify_report_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(code(&run(&["verify", "vertVF-C", "--seed", "3", "--out", s(&a)])), 0);
    assert_eq!(code(&run(&["verify", "vertVF-C", "--seed", "3", "--out", s(&b)])), 0);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn config_file_then_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 9, "lemmas": ["vertVF-W"]}"#).unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&run(&["--config", s(&cfg), "--seed", "4", "report", "--out", s(&out)])), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["config"]["seed"], 4);
    assert_eq!(r["lemmas"].as_array().unwrap().len(), 1);
    fs::write(&cfg, r#"{"tol": -1}"#).unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "report"])), 2);
}

#[test]
fn sample_upward_field() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "v0.json", r#"{"node":"v0"}"#);
    let o = run(&["sample", s(&src), "--box", "1", "-n", "100"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["fraction"], 1.0);
}

#[test]
fn sample_pump_with_tube() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "p0.json", r#"{"node":"p0","m":150}"#);
    let o = run(&["sample", s(&src), "--box", "400", "-n", "1000", "--tube", "1e-3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["fraction"], 1.0);
}

#[test]
fn sample_needs_points() {
    let dir = TempDir::new().unwrap();
    let src = doc(&dir, "v0.json", r#"{"node":"v0"}"#);
    assert_eq!(code(&run(&["sample", s(&src), "--box", "1", "-n", "0"])), 2);
}
