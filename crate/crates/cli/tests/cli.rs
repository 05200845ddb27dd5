use std::path::Path;
use std::process::{Command, Output};

fn hairline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hairline"))
        .args(args)
        .env_remove("HAIRLINE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = hairline(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn label_help_exits_zero() {
    let out = hairline(&["label", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--threshold"));
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = hairline(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_threshold_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--subjects", "3", "--images", "2", "--dim", "8", "--out-dir", p(d)]);
    let out = hairline(&[
        "label",
        "--manifest",
        p(&d.join("manifest.csv")),
        "--attributes",
        p(&d.join("attributes.csv")),
        "--threshold",
        "1.5",
        "--out",
        p(&d.join("l.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hairline(&[
        "label",
        "--manifest",
        p(&dir.path().join("absent.csv")),
        "--attributes",
        "a.csv",
        "--out",
        "l.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_label_audit_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = d.join("synth");
    ok(&["synth", "--subjects", "50", "--images", "10", "--dim", "64", "--fh-offset", "0.6", "--seed", "11", "--out-dir", p(&s)]);
    ok(&[
        "label",
        "--manifest",
        p(&s.join("manifest.csv")),
        "--attributes",
        p(&s.join("attributes.csv")),
        "--out",
        p(&d.join("labels.csv")),
    ]);
    for (threads, name) in [("1", "r1.json"), ("3", "r3.json")] {
        ok(&[
            "audit",
            "--threads",
            threads,
            "--manifest",
            p(&s.join("manifest.csv")),
            "--embeddings",
            p(&s.join("embeddings.bin")),
            "--labels",
            p(&d.join("labels.csv")),
            "--out",
            p(&d.join(name)),
        ]);
    }
    let r1 = std::fs::read(d.join("r1.json")).unwrap();
    assert_eq!(r1, std::fs::read(d.join("r3.json")).unwrap());
    ok(&[
        "report",
        "--in",
        p(&d.join("r1.json")),
        "--fig",
        "dist",
        "--out",
        p(&d.join("dist.svg")),
        "--table",
        p(&d.join("table.csv")),
    ]);
    for f in ["labels.csv", "r1.json", "dist.svg", "table.csv"] {
        assert!(d.join(f).metadata().unwrap().len() > 0, "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&r1).unwrap();
    let syn = &report["cohorts"]["SYN"]["groups"];
    let dp = |g: &str| syn[g]["dprime"].as_f64().unwrap();
    assert!(dp("CS-FH") < dp("CS-CS").min(dp("FH-FH")));
}

#[test]
fn manifest_grid_and_single_point_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = d.join("synth");
    ok(&["synth", "--subjects", "12", "--images", "8", "--dim", "8", "--out-dir", p(&s)]);
    ok(&[
        "label",
        "--manifest",
        p(&s.join("manifest.csv")),
        "--attributes",
        p(&s.join("attributes.csv")),
        "--out",
        p(&d.join("labels.csv")),
    ]);
    let (man, labels) = (s.join("manifest.csv"), d.join("labels.csv"));
    let (grid_dir, one_csv, bad_csv) = (d.join("grid"), d.join("one.csv"), d.join("bad.csv"));
    let common = [
        "manifest",
        "--protocol",
        "within",
        "--k",
        "4",
        "--subjects",
        "10",
        "--seed",
        "42",
        "--manifest",
        p(&man),
        "--labels",
        p(&labels),
    ];
    let mut grid = common.to_vec();
    grid.extend(["--reps", "2", "--out-dir", p(&grid_dir)]);
    ok(&grid);
    let mut one = common.to_vec();
    one.extend(["--x", "3", "--rep", "1", "--out", p(&one_csv)]);
    ok(&one);
    assert_eq!(
        std::fs::read(d.join("one.csv")).unwrap(),
        std::fs::read(d.join("grid/within_x3_rep1.csv")).unwrap()
    );
    assert_eq!(std::fs::read_dir(d.join("grid")).unwrap().count(), 5 * 2 * 2);

    let mut bad = common.to_vec();
    bad.extend(["--x", "5", "--out", p(&bad_csv)]);
    assert_eq!(hairline(&bad).status.code(), Some(1));
}

#[test]
fn augment_writes_log_and_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = d.join("synth");
    ok(&["synth", "--subjects", "6", "--images", "4", "--dim", "8", "--render-images", "--image-size", "64", "--out-dir", p(&s)]);
    let run = |out: &str| {
        ok(&[
            "augment",
            "--manifest",
            p(&s.join("manifest.csv")),
            "--landmarks",
            p(&s.join("landmarks.csv")),
            "--mode",
            "random-region",
            "--region",
            "mustache",
            "--prob",
            "1",
            "--scope",
            "all",
            "--seed",
            "5",
            "--out-dir",
            p(&d.join(out)),
            "--log",
            p(&d.join(format!("{out}.jsonl"))),
        ]);
    };
    run("a");
    run("b");
    let log = std::fs::read_to_string(d.join("a.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 24);
    assert_eq!(log, std::fs::read_to_string(d.join("b.jsonl")).unwrap());
    assert_eq!(
        std::fs::read(d.join("a/s00002_001.png")).unwrap(),
        std::fs::read(d.join("b/s00002_001.png")).unwrap()
    );
}
