use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sis(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sis"))
        .args(args)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SHIFT: &str = r#"{
  "id": "shift",
  "pipeline": "bounds",
  "model": {
    "generators": [{"kind": "bspline", "order": 1}],
    "measures": [{"atoms": [[0.0, 1.0]]}],
    "sampling": {"pattern": {"kind": "lattice", "step": 1.0, "offset": [OFFSET]}},
    "window": {"half_width": 8, "doublings": 2}
  }
}"#;

#[test]
fn bounds_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.json", &SHIFT.replace("OFFSET", "0.0"));
    let out = dir.path().join("out");
    let o = sis(&["bounds", "--window-doublings", "1"], &f, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let jsonl = std::fs::read_to_string(out.join("report.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(rec["scenario_id"], "shift");
    assert_eq!(rec["window_trace"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("scenario_id,pipeline,key,value,verdict\n"));
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("scenario.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["model"]["window"]["doublings"], 1);
    assert_eq!(resolved["reconstruction"]["trials"], 20);
}

#[test]
fn failing_verdict_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.json", &SHIFT.replace("OFFSET", "0.5"));
    let o = sis(&["bounds"], &f, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("fail stability_unstable"));
}

#[test]
fn schema_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "s.json",
        &SHIFT.replace("OFFSET", "0.0").replace("bspline", "wavelet"),
    );
    let o = sis(&["bounds"], &f, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.generators"));

    let missing = dir.path().join("nope.json");
    assert_eq!(
        sis(&["bounds"], &missing, &dir.path().join("out"))
            .status
            .code(),
        Some(4)
    );

    // the perturb pipeline needs a perturbation block
    let f = write(dir.path(), "t.json", &SHIFT.replace("OFFSET", "0.0"));
    assert_eq!(
        sis(&["perturb"], &f, &dir.path().join("out")).status.code(),
        Some(4)
    );
}

#[test]
fn seed_override_changes_jitter_output() {
    let dir = tempfile::tempdir().unwrap();
    let body = SHIFT
        .replace("OFFSET", "0.0")
        .replace("\"pipeline\": \"bounds\",", "\"pipeline\": \"sweep\", \"perturbation\": {\"kind\": \"jitter\", \"sweep\": [0.05], \"trials\": 2},");
    let f = write(dir.path(), "s.json", &body);
    let read = |o: &str| std::fs::read(dir.path().join(o).join("report.jsonl")).unwrap();
    assert_eq!(
        sis(&["sweep", "--seed", "1"], &f, &dir.path().join("a"))
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        sis(&["sweep", "--seed", "1"], &f, &dir.path().join("b"))
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        sis(&["sweep", "--seed", "2"], &f, &dir.path().join("c"))
            .status
            .code(),
        Some(0)
    );
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
