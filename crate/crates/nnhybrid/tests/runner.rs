mod common;

use std::fs;

use common::{blobs_manifest, image_idx, IMAGE_MANIFEST};
use nnhybrid::manifest::RunManifest;
use nnhybrid::runner::{
    load_splits, read_results, run_manifest, RunOptions, FAILURES_FILE, PLOT_FILE, REPORT_FILE, RESULTS_FILE,
    TIMINGS_FILE,
};
use nnhybrid_core::pipeline::{Family, Hyper};

fn opts(jobs: usize) -> RunOptions {
    RunOptions { jobs, ..RunOptions::default() }
}

#[test]
fn every_family_yields_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest::load(&blobs_manifest(dir.path(), "[1]")).unwrap();
    let summary = run_manifest(&m, &opts(1)).unwrap();
    assert!(summary.succeeded(), "{:?}", summary.failures);
    assert_eq!((summary.total, summary.executed, summary.resumed), (5, 5, 0));

    let out = dir.path().join("out");
    let records = read_results(&out.join(RESULTS_FILE)).unwrap();
    let families: Vec<Family> = records.iter().map(|r| r.to_result().unwrap().model_family).collect();
    assert_eq!(families, vec![Family::Nn, Family::Svm, Family::Knn, Family::NnSvm, Family::NnKnn]);
    for r in &records {
        let r = r.to_result().unwrap();
        assert_eq!(r.dataset_name, "Blobs");
        assert!((0.0..=1.0).contains(&r.test_accuracy));
        match r.model_family {
            Family::Nn => assert_eq!((r.architecture_id, r.epochs, r.chosen_hyper), (Some(5), 3, None)),
            Family::Svm => assert!(matches!(r.chosen_hyper, Some(Hyper::C(_))) && r.epochs == 0),
            Family::Knn => assert!(matches!(r.chosen_hyper, Some(Hyper::K(_))) && r.architecture_id.is_none()),
            Family::NnSvm => assert!(matches!(r.chosen_hyper, Some(Hyper::C(_)))),
            Family::NnKnn => assert!(matches!(r.chosen_hyper, Some(Hyper::K(_)))),
        }
    }
    // Well separated blobs: the classical baselines are near perfect.
    assert!(records[1].test_accuracy > 0.9 && records[2].test_accuracy > 0.9);

    assert_eq!(fs::read_to_string(out.join(TIMINGS_FILE)).unwrap().lines().count(), 5);
    assert!(!out.join(FAILURES_FILE).exists());
    assert!(fs::read_to_string(out.join(REPORT_FILE)).unwrap().contains("Blobs"));
    assert_eq!(fs::read_to_string(out.join(PLOT_FILE)).unwrap().lines().count(), 6);
}

#[test]
fn reruns_and_worker_counts_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::load(&blobs_manifest(dir.path(), "[1, 2]")).unwrap();
    let results = dir.path().join("out").join(RESULTS_FILE);

    run_manifest(&m, &opts(1)).unwrap();
    let first = fs::read(&results).unwrap();
    run_manifest(&m, &RunOptions { fresh: true, ..opts(1) }).unwrap();
    assert_eq!(fs::read(&results).unwrap(), first);

    m.output_dir = dir.path().join("parallel");
    let summary = run_manifest(&m, &opts(3)).unwrap();
    assert_eq!(summary.executed, 10);
    assert_eq!(fs::read(m.output_dir.join(RESULTS_FILE)).unwrap(), first);
}

#[test]
fn interrupted_runs_resume() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest::load(&blobs_manifest(dir.path(), "[1]")).unwrap();
    let results = dir.path().join("out").join(RESULTS_FILE);
    run_manifest(&m, &opts(1)).unwrap();
    let complete = fs::read_to_string(&results).unwrap();

    // Keep two records and a torn third line.
    let lines: Vec<&str> = complete.lines().collect();
    fs::write(&results, format!("{}\n{}\n{}", lines[3], lines[0], &lines[1][..20])).unwrap();
    let summary = run_manifest(&m, &opts(2)).unwrap();
    assert_eq!((summary.resumed, summary.executed), (2, 3));
    assert_eq!(fs::read_to_string(&results).unwrap(), complete);

    let again = run_manifest(&m, &opts(1)).unwrap();
    assert_eq!((again.resumed, again.executed), (5, 0));
    assert_eq!(fs::read_to_string(&results).unwrap(), complete);
}

#[test]
fn failed_cells_are_listed_and_the_rest_kept() {
    let dir = tempfile::tempdir().unwrap();
    // The first 30 rows all carry one label, so a given-order training
    // block holds a single class and the SVM cannot be fitted.
    let mut text = String::new();
    for i in 0..60 {
        let label = if i < 30 { 0 } else { i % 2 };
        text.push_str(&format!("{},{},{label}\n", i as f64 * 0.1, (i % 7) as f64));
    }
    fs::write(dir.path().join("t.csv"), text).unwrap();
    fs::write(
        dir.path().join("m.toml"),
        "output_dir = \"out\"\n[dataset]\nkind = \"numeric\"\npath = \"t.csv\"\n\
         [split]\ntrain = 20\nval = 10\ntest = 30\nstrategy = \"given-order\"\n\
         [[experiment]]\nfamily = \"SVM\"\nseeds = [1]\n[[experiment]]\nfamily = \"KNN\"\nseeds = [1]\n",
    )
    .unwrap();
    let m = RunManifest::load(&dir.path().join("m.toml")).unwrap();
    let summary = run_manifest(&m, &opts(1)).unwrap();
    assert_eq!(summary.failures.len(), 1);
    assert_eq!(summary.failures[0].cell.family, Family::Svm);
    let out = dir.path().join("out");
    let failures = fs::read_to_string(out.join(FAILURES_FILE)).unwrap();
    let line: serde_json::Value = serde_json::from_str(failures.lines().next().unwrap()).unwrap();
    assert_eq!(line["model_family"], "SVM");
    assert_eq!(line["cell_id"], summary.failures[0].cell_id.as_str());
    assert_eq!(read_results(&out.join(RESULTS_FILE)).unwrap().len(), 1);
}

#[test]
fn idx_splits_come_from_the_file_ends() {
    let dir = tempfile::tempdir().unwrap();
    image_idx(dir.path());
    let m = RunManifest::parse(IMAGE_MANIFEST, dir.path(), "x").unwrap();
    let s = load_splits(&m.dataset, &m.split).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (40, 15, 30));
    assert_eq!(s.train.features().shape(), &[40, 1, 8, 8]);
    let train_file = nnhybrid::idx::load_idx(&dir.path().join("train-images"), &dir.path().join("train-labels")).unwrap();
    assert_eq!(s.train.sample(0), train_file.sample(0));
    assert_eq!(s.val.sample(14), train_file.sample(59));
    assert_eq!(s.val.sample(0), train_file.sample(45));
    assert_eq!(s.train.name, "Pics");
    assert_eq!(s.test.class_count(), 3);

    let too_big = RunManifest::parse(&IMAGE_MANIFEST.replace("test = 30", "test = 31"), dir.path(), "x").unwrap();
    assert!(load_splits(&too_big.dataset, &too_big.split).is_err());
}

#[test]
fn image_hybrids_run_and_save_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    image_idx(dir.path());
    let m = RunManifest::parse(IMAGE_MANIFEST, dir.path(), "x").unwrap();
    let summary = run_manifest(&m, &RunOptions { save_artifacts: true, ..opts(2) }).unwrap();
    assert!(summary.succeeded(), "{:?}", summary.failures);
    let artifacts = dir.path().join("out").join("artifacts");
    for f in ["train.dhds", "val.dhds", "test.dhds", "hybrid-a4-e2-s1.dhnn"] {
        assert!(artifacts.join(f).exists(), "{f}");
    }
}
