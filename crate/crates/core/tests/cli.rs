use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fusion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusion"))
        .args(args)
        .output()
        .expect("run fusion")
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}.problem", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn prune_reports_each_rule() {
    let o = fusion(&["prune", &fixture("pruning_example")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("NonAncestors: removed {Z4,Z5}"), "{text}");
    assert!(text.contains("Separated: removed {Z1,Z2,Z3}"), "{text}");
    assert!(text.contains("Isolated via W2: removed {Z6,Z7}"), "{text}");

    let j = json(&fusion(&["prune", &fixture("pruning_example"), "--json"]));
    let removed: Vec<Vec<String>> = j["steps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| serde_json::from_value(s["removed"].clone()).unwrap())
        .collect();
    assert_eq!(
        removed,
        vec![vec!["Z4", "Z5"], vec!["Z1", "Z2", "Z3"], vec!["Z6", "Z7"]]
    );
}

#[test]
fn identify_text_and_json_agree() {
    for (file, extra) in [
        ("tobacco_s_do_r", vec!["--auto"]),
        ("tobacco_b_do_r", vec!["--auto"]),
        ("athero_row2", vec!["--cluster", "B=B1,B2", "--cluster", "M=M1,M2"]),
    ] {
        let path = fixture(file);
        let mut args = vec!["identify", path.as_str()];
        args.extend(&extra);
        let text = fusion(&args);
        assert_eq!(text.status.code(), Some(0), "{file}");
        args.push("--json");
        let j = json(&fusion(&args));
        let text = stdout(&text);
        let label = j["label"].as_str().unwrap();
        assert!(text.contains(&format!("verdict: {label}")), "{file}: {text}");
        if let Some(expr) = j["expression"].as_str() {
            assert!(text.contains(&format!("functional: {expr}")), "{file}: {text}");
        } else {
            assert_eq!(j["verdict"], "not_identified");
            assert!(!text.contains("functional:"));
        }
    }
}

#[test]
fn undetermined_invariance_exits_with_two() {
    let o = fusion(&[
        "invariance",
        &fixture("counter_line9"),
        "--cluster",
        "Z=Z1,Z2",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let j = json(&o);
    assert_eq!(j["invariance"]["verdict"], "undetermined");
    assert_eq!(j["invariance"]["trace"]["returned_at"], 9);
}

#[test]
fn certified_invariance_exits_with_zero() {
    let o = fusion(&["invariance", &fixture("athero_row1"), "--cluster", "H=H1,H2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn clusters_are_listed_largest_first() {
    let j = json(&fusion(&["clusters", &fixture("clusters_case_i"), "--json"]));
    let sizes: Vec<usize> = j
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["members"].as_array().unwrap().len())
        .collect();
    assert!(!sizes.is_empty());
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
}

#[test]
fn usage_and_parse_errors_exit_with_one() {
    assert_eq!(fusion(&["identify"]).status.code(), Some(1));
    assert_eq!(fusion(&["identify", "/nonexistent.problem"]).status.code(), Some(1));
    assert_eq!(fusion(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.problem");
    std::fs::write(&bad, "[graph]\nX -> Y\nY -> X\n[inputs]\np(X,Y)\n[query]\np(Y|do(X))\n").unwrap();
    let o = fusion(&["identify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(fusion(&["--help"]).status.code(), Some(0));
}

#[test]
fn cluster_with_query_variable_is_rejected() {
    let o = fusion(&["identify", &fixture("counter_line7"), "--cluster", "Z=X,Z1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv: PathBuf = dir.path().join("sim.csv");
    let summary: PathBuf = dir.path().join("summary.json");
    let o = fusion(&[
        "simulate",
        "--instances",
        "6",
        "--seed",
        "3",
        "--csv",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap();
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let kept = s["kept"].as_u64().unwrap() as usize;
    assert_eq!(rows.lines().count(), kept + 1);
    assert!(rows.starts_with("seed,graph_size,n_inputs,setting,"));
}
