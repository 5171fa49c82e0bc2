//! In-process tests of the command layer (the binary-level contract lives
//! in `cli.rs`).

use std::io::Write;

use bezsched_cli::commands::evaluate_scheduler;
use bezsched_cli::config::ExperimentConfig;
use bezsched_core::Scheduler;

fn config_with(train: &str) -> (tempfile::NamedTempFile, ExperimentConfig) {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(
        f,
        "seed = 3\n[gmm]\npreset = \"circle8\"\n[train]\n{train}"
    )
    .unwrap();
    let cfg = ExperimentConfig::load(f.path()).unwrap();
    (f, cfg)
}

#[test]
fn linear_scheduler_converges_to_teacher_at_large_nfe() {
    // identity transform, generous budget: the student collapses onto the
    // adaptive teacher
    let (_f, cfg) = config_with("method = \"rk2\"\nnfe = 4\nval_count = 16\ntrain_count = 16\n");
    let report = evaluate_scheduler(&cfg, &Scheduler::linear(), &[512]).unwrap();
    assert_eq!(report.rows.len(), 1);
    let mse = report.rows[0].endpoint_mse;
    assert!(mse < 1e-4, "NFE=512 rk2 should sit on the teacher, mse {mse}");
}

#[test]
fn eval_report_has_one_row_per_requested_nfe() {
    let (_f, cfg) = config_with("method = \"rk2\"\nnfe = 10\nval_count = 12\ntrain_count = 12\n");
    let report = evaluate_scheduler(&cfg, &Scheduler::linear(), &[6, 8, 10]).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.endpoint_mse >= 0.0));
    assert!(report.rows.iter().all(|r| r.energy_distance >= 0.0));
    let csv = report.to_csv_string();
    assert!(csv.starts_with("# scheduler=linear method=rk2"));
    assert_eq!(csv.lines().count(), 2 + 3);
}
