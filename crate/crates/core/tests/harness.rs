use std::fs;

use misslogit::harness::{run_experiment, ExperimentConfig, RunOptions, Status};

fn config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "scenario": { "kind": "MAR", "seed": 5 },
            "methods": ["CC", "Mean.IMP.M", "PbP", "MICE.2.Y.IMP"],
            "train_sizes": [300, 800],
            "test_size": 500,
            "replicates": 2,
            "base_seed": 3,
            "oracle_mc_k": 1000
        }"#,
    )
    .unwrap()
}

#[test]
fn smallest_grid_gives_one_row() {
    let cfg = ExperimentConfig::from_json(
        r#"{ "scenario": { "kind": "MCAR" }, "methods": ["Mean.IMP"], "train_sizes": [200],
             "test_size": 300, "replicates": 1, "oracle_mc_k": 500 }"#,
    )
    .unwrap();
    let rows = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, Status::Ok);
    assert!(rows[0].mae_bayes.is_some());
}

#[test]
fn every_method_appears_once_per_cell() {
    let cfg = config();
    let rows = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 4 * 2 * 2);
    for m in ["CC", "Mean.IMP.M", "PbP", "MICE.2.Y.IMP"] {
        assert_eq!(rows.iter().filter(|r| r.method == m).count(), 4, "{m}");
    }
    let cc = rows.iter().find(|r| r.method == "CC").unwrap();
    assert!(cc.mae_bayes.is_none() && cc.coef_mse.is_some());
}

#[test]
fn reruns_are_identical_and_resume_fills_gaps() {
    let cfg = config();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        workers: Some(2),
        out_dir: Some(dir.path().to_path_buf()),
        resume: false,
    };
    run_experiment(&cfg, &opts).unwrap();
    let first = fs::read(dir.path().join("results.csv")).unwrap();

    let journal = dir.path().join("cells.jsonl");
    let kept: Vec<String> = fs::read_to_string(&journal).unwrap().lines().take(1).map(str::to_string).collect();
    fs::write(&journal, kept.join("\n") + "\n").unwrap();
    fs::remove_file(dir.path().join("results.csv")).unwrap();
    run_experiment(&cfg, &RunOptions { resume: true, workers: Some(1), ..opts.clone() }).unwrap();
    assert_eq!(first, fs::read(dir.path().join("results.csv")).unwrap());

    let other = tempfile::tempdir().unwrap();
    run_experiment(&cfg, &RunOptions { out_dir: Some(other.path().to_path_buf()), ..opts }).unwrap();
    assert_eq!(first, fs::read(other.path().join("results.csv")).unwrap());
}

#[test]
fn nonlinear_scenario_runs_without_closed_form() {
    let cfg = ExperimentConfig::from_json(
        r#"{ "scenario": { "kind": "NONLINEAR", "seed": 1 }, "methods": ["Mean.IMP", "PbP"],
             "train_sizes": [500], "test_size": 400, "replicates": 1, "oracle_mc_k": 500 }"#,
    )
    .unwrap();
    let rows = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !matches!(r.status, Status::Failed(_)) && r.mae_bayes.is_some()));
}

#[test]
fn duplicate_method_labels_are_rejected() {
    let err = ExperimentConfig::from_json(
        r#"{ "scenario": { "kind": "MCAR" }, "methods": ["PbP", "PbP"], "train_sizes": [200] }"#,
    );
    assert!(err.is_err());
}
