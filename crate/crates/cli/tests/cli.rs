use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.csv")
}

fn data_args() -> Vec<String> {
    [
        "--input",
        fixture().to_str().unwrap(),
        "--numeric-cols",
        "age,education_num,hours_per_week",
        "--color-col",
        "group",
        "--color-map",
        "blue=0,red=1",
        "--eps",
        "0.125",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn fairhc(args: &[&str], extra: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairhc")).args(args).args(extra).output().unwrap()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn strip_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings_ms");
    v
}

#[test]
fn run_on_fixture_passes_audit() {
    let out = fairhc(&["run"], &data_args());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out.stdout);
    let audit = &report["audit"];
    assert_eq!(audit["passed"], true);
    assert_eq!(audit["fairness"]["violations"], 0);
    assert_eq!(report["params"]["n"], 16);
    let ratio = report["ratio_cost"].as_f64().unwrap();
    assert!(ratio >= 1.0 - 1e-12, "fair cost below linkage cost: {ratio}");
    let counts = report["histogram"]["counts"].as_array().unwrap();
    assert_eq!(counts.len(), 50);
}

#[test]
fn runs_are_deterministic_up_to_timings() {
    let a = json(&fairhc(&["run", "--seed", "3"], &data_args()).stdout);
    let b = json(&fairhc(&["run", "--seed", "3"], &data_args()).stdout);
    assert_eq!(strip_timings(a), strip_timings(b));
}

#[test]
fn emitted_trees_audit_as_expected() {
    let dir = tempfile::tempdir().unwrap();
    let fair = dir.path().join("fair.json");
    let vanilla = dir.path().join("vanilla.json");
    let out = fairhc(
        &["run", "--emit-tree", fair.to_str().unwrap(), "--emit-vanilla", vanilla.to_str().unwrap()],
        &data_args(),
    );
    assert!(out.status.success());

    let ok = fairhc(&["audit", "--tree", fair.to_str().unwrap()], &data_args());
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok.stdout)["passed"], true);

    let bad = fairhc(&["audit", "--tree", vanilla.to_str().unwrap()], &data_args());
    assert_eq!(bad.status.code(), Some(3));
    let report = json(&bad.stdout);
    assert_eq!(report["passed"], false);
    assert!(report["audit"]["fairness"]["violations"].as_u64().unwrap() > 0);

    let lenient = fairhc(&["audit", "--no-strict", "--tree", vanilla.to_str().unwrap()], &data_args());
    assert_eq!(lenient.status.code(), Some(0));
}

#[test]
fn corrupted_tree_reports_conservation_violation() {
    let dir = tempfile::tempdir().unwrap();
    let fair = dir.path().join("fair.json");
    assert!(fairhc(&["run", "--emit-tree", fair.to_str().unwrap()], &data_args()).status.success());

    // Point one leaf at the row of another: one row doubles, one goes missing.
    let mut tree = json(&fs::read(&fair).unwrap());
    let nodes = tree["nodes"].as_array_mut().unwrap();
    let rows: Vec<usize> = nodes.iter().filter_map(|n| n["leaf"].as_u64()).map(|r| r as usize).collect();
    let victim = nodes.iter_mut().find(|n| n["leaf"].as_u64() == Some(rows[0] as u64)).unwrap();
    victim["leaf"] = Value::from(rows[1]);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, serde_json::to_string(&tree).unwrap()).unwrap();

    let out = fairhc(&["audit", "--tree", broken.to_str().unwrap()], &data_args());
    assert_eq!(out.status.code(), Some(3));
    let report = json(&out.stdout);
    assert_eq!(report["passed"], false);
    assert!(!report["violations"]["conservation"].as_array().unwrap().is_empty());
}

#[test]
fn replications_add_a_summary_and_seeded_trees() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("t.json");
    let hist = dir.path().join("h.csv");
    let out = fairhc(
        &[
            "run",
            "--replications",
            "3",
            "--n",
            "12",
            "--seed",
            "5",
            "--emit-tree",
            tree.to_str().unwrap(),
            "--histogram-csv",
            hist.to_str().unwrap(),
        ],
        &data_args(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out.stdout);
    assert_eq!(v["reports"].as_array().unwrap().len(), 3);
    assert_eq!(v["summary"]["replications"], 3);
    for seed in 5..8 {
        assert!(dir.path().join(format!("t.seed{seed}.json")).exists());
    }
    let csv = fs::read_to_string(&hist).unwrap();
    assert!(csv.starts_with("bin_midpoint,count"));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let bad_h = fairhc(&["run", "--h", "1"], &data_args());
    assert_eq!(bad_h.status.code(), Some(1));
    let err = json(&bad_h.stderr);
    assert_eq!(err["error"]["phase"], "usage");

    let unknown = fairhc(&["run", "--bogus"], &data_args());
    assert_eq!(unknown.status.code(), Some(1));

    let mut missing = data_args();
    missing[1] = "/nonexistent/rows.csv".into();
    let out = fairhc(&["run"], &missing);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["phase"], "ingest");

    let mut unmapped = data_args();
    unmapped[7] = "blue=0".into();
    let out = fairhc(&["run"], &unmapped);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_writes_a_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("census.csv");
    let out = fairhc(&["synth", "--rows", "300", "--seed", "1", "--out", path.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 301);

    let args: Vec<String> = [
        "run",
        "--input",
        path.to_str().unwrap(),
        "--numeric-cols",
        "age,education_num,hours_per_week",
        "--color-col",
        "race",
        "--color-map",
        "blue=0,red=1",
        "--n",
        "128",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let out = Command::new(env!("CARGO_BIN_EXE_fairhc")).args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out.stdout)["params"]["n"], 128);
}

#[test]
fn inputs_are_left_untouched() {
    let before = fs::read(fixture()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let fair = dir.path().join("fair.json");
    fairhc(&["run", "--emit-tree", fair.to_str().unwrap()], &data_args());
    let tree_before = fs::read(&fair).unwrap();
    fairhc(&["audit", "--tree", fair.to_str().unwrap()], &data_args());
    assert_eq!(fs::read(fixture()).unwrap(), before);
    assert_eq!(fs::read(&fair).unwrap(), tree_before);
}
