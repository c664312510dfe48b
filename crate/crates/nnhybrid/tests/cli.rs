mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{blobs_manifest, image_idx, IMAGE_MANIFEST};
use nnhybrid::codec;
use nnhybrid_core::data::Dataset;

fn nnhybrid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnhybrid"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NNHYBRID_JOBS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_counts_cells_and_rejects_bad_manifests() {
    let dir = tempfile::tempdir().unwrap();
    blobs_manifest(dir.path(), "[1, 2]");
    let ok = nnhybrid(&["validate", "run.toml"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert_eq!(stdout(&ok).trim(), "blobs: 10 cells");

    fs::write(dir.path().join("bad.toml"), "[split]\ntrain = 0\n").unwrap();
    let bad = nnhybrid(&["validate", "bad.toml"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("split.train"), "{}", stderr(&bad));

    let missing = nnhybrid(&["validate", "nope.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn run_then_report_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    blobs_manifest(dir.path(), "[1]");
    let run = nnhybrid(&["run", "run.toml", "--out", "cli-out", "--seeds", "4", "--jobs", "2"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    assert!(stdout(&run).contains("Blobs"));
    assert!(stderr(&run).contains("5 cells: 5 run, 0 resumed, 0 failed"));
    let results = dir.path().join("cli-out").join("results.jsonl");
    assert!(fs::read_to_string(&results).unwrap().contains("\"seed\":4"));

    let text = nnhybrid(&["report", results.to_str().unwrap()], dir.path());
    assert_eq!(text.status.code(), Some(0));
    assert!(stdout(&text).starts_with("Model"));
    let json = nnhybrid(&["report", results.to_str().unwrap(), "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["datasets"][0], "Blobs");
    let csv = nnhybrid(&["report", results.to_str().unwrap(), "--format", "csv"], dir.path());
    assert!(stdout(&csv).starts_with("Model,Blobs\n"));
    let bad = nnhybrid(&["report", results.to_str().unwrap(), "--format", "xml"], dir.path());
    assert_eq!(bad.status.code(), Some(2));

    let again = nnhybrid(&["run", "run.toml", "--out", "cli-out", "--seeds", "4"], dir.path());
    assert!(stderr(&again).contains("5 cells: 0 run, 5 resumed"), "{}", stderr(&again));
}

#[test]
fn failing_cells_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = (0..40).map(|i| format!("{},{}\n", i as f64, if i < 25 { 0 } else { 1 })).collect();
    fs::write(dir.path().join("t.csv"), text).unwrap();
    fs::write(
        dir.path().join("m.toml"),
        "[dataset]\nkind = \"numeric\"\npath = \"t.csv\"\n[split]\ntrain = 10\nval = 5\ntest = 25\n\
         strategy = \"given-order\"\n[[experiment]]\nfamily = \"SVM\"\n",
    )
    .unwrap();
    let o = nnhybrid(&["run", "m.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(dir.path().join("results").join("failures.jsonl").exists());
}

#[test]
fn extract_writes_256_features_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    image_idx(dir.path());
    fs::write(dir.path().join("img.toml"), IMAGE_MANIFEST).unwrap();
    let run = nnhybrid(&["run", "img.toml", "--save-artifacts"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));

    let net = "out/artifacts/hybrid-a4-e2-s1.dhnn";
    let o = nnhybrid(&["extract", "--network", net, "--data", "out/artifacts/test.dhds", "--out", "f.dhds"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let features: Dataset = codec::load(&dir.path().join("f.dhds")).unwrap();
    assert_eq!(features.features().shape(), &[30, 256]);

    let o = nnhybrid(
        &["extract", "--network", net, "--data", "test-images", "--labels", "test-labels", "--out", "f.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert_eq!(csv.lines().count(), 30);
    assert!(csv.lines().all(|l| l.split(',').count() == 257));
}
