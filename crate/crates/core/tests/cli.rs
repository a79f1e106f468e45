use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rapidpose::io::{load_poses, read_json, EvalDoc};
use rapidpose::metrics::{evaluate, EvalOptions};
use rapidpose::runner::eval_set_for;

fn rpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpt")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Synth {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Synth {
    fn new(extra: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let mut args = vec!["--seed", "3", "synth", "--out-dir", s(&root), "--frames", "4"];
        args.extend_from_slice(extra);
        let out = rpt(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Synth { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error record");
    serde_json::from_str(line).unwrap()
}

#[test]
fn missing_calibration_is_a_data_error_naming_the_path() {
    let d = Synth::new(&[]);
    let missing = d.path("nope.json");
    let out = rpt(&[
        "run",
        "--calibration",
        s(&missing),
        "--detections",
        s(&d.path("detections.json")),
        "--output",
        s(&d.path("out.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "data_error");
    assert_eq!(rec["path"], s(&missing));
    assert!(!d.path("out.json").exists());
}

#[test]
fn bad_config_file_is_a_config_error() {
    let d = Synth::new(&[]);
    let cfg = d.path("bad.toml");
    std::fs::write(&cfg, "[pipeline]\nmax_reproj_err_pixels = 3\n").unwrap();
    let out = rpt(&[
        "--config",
        s(&cfg),
        "run",
        "--calibration",
        s(&d.path("calibration.json")),
        "--detections",
        s(&d.path("detections.json")),
        "--output",
        s(&d.path("out.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "config_error");
}

#[test]
fn unknown_flag_exits_with_config_code() {
    assert_eq!(rpt(&["run", "--frobnicate"]).status.code(), Some(2));
}

#[test]
fn wrong_joint_count_names_expected_shape() {
    let d = Synth::new(&[]);
    let out = rpt(&[
        "--joint-set",
        "wholebody136",
        "run",
        "--calibration",
        s(&d.path("calibration.json")),
        "--detections",
        s(&d.path("detections.json")),
        "--output",
        s(&d.path("out.json")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = error_record(&out);
    assert!(rec["message"].as_str().unwrap().contains("136"), "{rec}");
}

#[test]
fn eval_matches_library_and_honors_thresholds() {
    let d = Synth::new(&["--noise-px", "2"]);
    let pred = d.path("pred.json");
    let out = rpt(&[
        "run",
        "--calibration",
        s(&d.path("calibration.json")),
        "--detections",
        s(&d.path("detections.json")),
        "--output",
        s(&pred),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let eval_path = d.path("eval.json");
    let table_path = d.path("eval.txt");
    let out = rpt(&[
        "eval",
        "--gt",
        s(&d.path("gt.json")),
        "--pred",
        s(&pred),
        "--output",
        s(&eval_path),
        "--table",
        s(&table_path),
        "--pck-thresholds",
        "50,150",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PCK@50") && stdout.contains("Recall@150"), "{stdout}");
    assert_eq!(std::fs::read_to_string(&table_path).unwrap(), stdout);

    let doc: EvalDoc = read_json(&eval_path).unwrap();
    assert_eq!(doc.thresholds_mm, vec![50.0, 150.0]);
    let (gt_doc, gt) = load_poses(&d.path("gt.json")).unwrap();
    let (_, pr) = load_poses(&pred).unwrap();
    let source = gt_doc.joint_set();
    let opts = EvalOptions {
        thresholds_mm: vec![50.0, 150.0],
        ..EvalOptions::default()
    };
    let lib = evaluate(&gt, &pr, &source, &eval_set_for(&source), &opts).unwrap();
    assert_eq!(doc.result, lib);
    assert!(lib.pck.contains_key("50") && lib.recall.contains_key("150"));
}

#[test]
fn nonpositive_threshold_is_rejected() {
    let d = Synth::new(&[]);
    let out = rpt(&[
        "eval",
        "--gt",
        s(&d.path("gt.json")),
        "--pred",
        s(&d.path("gt.json")),
        "--pck-thresholds",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_and_ablate_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench.json");
    let out = rpt(&["bench", "--repetitions", "20", "--frames", "3", "--output", s(&bench)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = read_json(&bench).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 10);

    let abl = dir.path().join("ablate.json");
    let out = rpt(&["ablate", "--frames", "3", "--output", s(&abl)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = read_json(&abl).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 11);
    assert!(String::from_utf8(out.stdout).unwrap().contains("no pair pre-filtering"));
}
