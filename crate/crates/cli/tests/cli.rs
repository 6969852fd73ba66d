use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn opclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opclass"))
        .args(args)
        .output()
        .expect("run opclass")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn train(dir: &Path, features: &str, algorithm: &str) -> PathBuf {
    let model = dir.join(format!("{algorithm}-{features}.json"));
    let o = opclass(&[
        "train",
        "--corpus",
        fixture("synthetic_bytecode.jsonl").to_str().unwrap(),
        "--features",
        features,
        "--algorithm",
        algorithm,
        "--seed",
        "3",
        "--rounds",
        "10",
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    model
}

#[test]
fn disasm_listing_and_exit_codes() {
    let o = opclass(&["disasm", "0x6001"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0000: PUSH1 0x01\n");

    let o = opclass(&["disasm", ""]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");

    let o = opclass(&["disasm", "0x6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("odd"));

    let o = opclass(&["disasm", "0x6001fe61aa"]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0002: INVALID"));
    assert!(lines[2].starts_with("0003: PUSH2 0xaa"));
}

#[test]
fn extract_prints_named_counts() {
    let o = opclass(&["extract", "0x600160015401"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["PUSH"], 2.0);
    assert_eq!(v["SLOAD"], 1.0);
    assert_eq!(v["ADD"], 1.0);
    assert_eq!(v["size"], 6.0);
}

#[test]
fn classify_prints_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "code", "adaboost");
    let o = opclass(&[
        "classify",
        "--model",
        model.to_str().unwrap(),
        "--records",
        fixture("heldout_bytecode.jsonl").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 30);
    for line in text.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 2 + 6);
        let total: f64 = fields[2..]
            .iter()
            .map(|f| f.split_once('=').unwrap().1.parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() <= 1e-9, "{line}");
    }

    let o = opclass(&["classify", "--model", model.to_str().unwrap(), "0x6001", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["probabilities"].as_array().unwrap().len(), 6);
}

#[test]
fn full_model_needs_account_data() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "full", "c45");
    let o = opclass(&["classify", "--model", model.to_str().unwrap(), "0x6001"]);
    assert_eq!(o.status.code(), Some(3));
    let o = opclass(&[
        "classify",
        "--model",
        model.to_str().unwrap(),
        "--records",
        fixture("heldout_bytecode.jsonl").to_str().unwrap(),
    ]);
    assert!(o.status.success());
}

#[test]
fn one_fold_is_rejected() {
    let o = opclass(&[
        "crossval",
        "--corpus",
        fixture("synthetic_bytecode.jsonl").to_str().unwrap(),
        "--folds",
        "1",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_is_required_for_training() {
    let o = opclass(&[
        "crossval",
        "--corpus",
        fixture("synthetic_bytecode.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn crossval_report_names_selected_features() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = opclass(&[
        "crossval",
        "--corpus",
        fixture("synthetic_bytecode.jsonl").to_str().unwrap(),
        "--algorithm",
        "bpso-adaboost",
        "--seed",
        "7",
        "--swarm-size",
        "6",
        "--generations",
        "4",
        "--rounds",
        "10",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("algorithm,"));
    assert!(text.lines().nth(1).unwrap().starts_with("bpso-adaboost,"));

    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["config"]["algorithm"], "bpso-adaboost");
    assert!(!v["selected_features"].as_array().unwrap().is_empty());
    assert_eq!(v["folds"].as_array().unwrap().len(), 10);
    let area = v["pooled"]["auc_area"].as_f64().unwrap();
    assert!(area > 0.9, "{area}");
}

#[test]
fn evaluate_reports_held_out_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "code", "c45");
    let report = dir.path().join("eval.json");
    let o = opclass(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        fixture("heldout_bytecode.jsonl").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["report"]["accuracy"], 1.0);
}

#[test]
fn normalize_then_extract() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("0xab_Game.hex"), "0x600100").unwrap();
    let out = dir.path().join("norm.jsonl");
    let o = opclass(&[
        "normalize",
        "--input",
        dir.path().to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("features.csv");
    let o = opclass(&[
        "extract",
        "--corpus",
        out.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 78 + 1);
    assert_eq!(*header.last().unwrap(), "label");
    assert!(lines.next().unwrap().ends_with(",3,Game"));
}
