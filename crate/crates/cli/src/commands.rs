//! Command implementations. Everything here is a pure function of
//! (config, seed, inputs); all artifacts are written once, after the work is
//! done, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use bezsched_core::{
    build_pairs, fit_scheduler_to_timesteps, integrate_fixed, make_grid, sample_target, solve_student,
    train, verify, GmmVelocityField, Method, RunReport, Scheduler, TransformContext,
};
use bezsched_core::metrics::{endpoint_mse, energy_distance};

use crate::config::ExperimentConfig;
use crate::plot::{scheduler_svg, trajectories_svg, Series};
use crate::CliError;

// Seed offsets so pair generation, evaluation, and sampling never share a
// stream.
const SEED_EVAL_PAIRS: u64 = 10;
const SEED_EVAL_TARGET: u64 = 11;

/// Per-NFE evaluation row: endpoint MSE against the teacher and energy
/// distance between the student endpoint cloud and fresh target samples.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalRow {
    pub nfe: usize,
    pub endpoint_mse: f64,
    pub energy_distance: f64,
}

/// Generalization table: one scheduler (trained at `trained_nfe`, when
/// known) evaluated across `rows` of unseen NFE budgets.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub scheduler_kind: String,
    pub method: Method,
    pub trained_nfe: Option<usize>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv_string(&self) -> String {
        let trained = self
            .trained_nfe
            .map_or("unknown".to_string(), |n| n.to_string());
        let mut out = format!(
            "# scheduler={} method={} trained_nfe={trained}\n",
            self.scheduler_kind,
            self.method.as_str()
        );
        out.push_str("nfe,endpoint_mse,energy_distance\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.17e},{:.17e}\n",
                row.nfe, row.endpoint_mse, row.energy_distance
            ));
        }
        out
    }
}

fn ensure_out_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Config("no output directory: set out_dir or pass --out".into()))?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_artifact(path: &Path, bytes: &str) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}

fn loss_curve_csv(report: &RunReport) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (e, (t, v)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
        out.push_str(&format!("{e},{t:.17e},{v:.17e}\n"));
    }
    out
}

/// `train`: runs the optimization and writes `run_report.json`,
/// `scheduler.json`, and `loss_curve.csv` into the output directory. With
/// `trajectories > 0`, also exports that many teacher / initial-student /
/// trained-student trajectory CSV triples under `traj/` for plotting.
pub fn cmd_train(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    trajectories: usize,
) -> Result<RunReport, CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = ensure_out_dir(&cfg, out)?;
    let gmm = cfg.gmm_spec()?;
    let source = cfg.source_scheduler()?;
    let train_cfg = cfg.train_config();

    let report = train(&train_cfg, cfg.degree, &gmm, &source)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    info!(
        "training finished in {:.1}s; best validation loss {:.6} at epoch {}",
        report.wall_time_secs,
        report.best_val_loss(),
        report.selected_epoch
    );

    let sched = report
        .final_scheduler()
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let report_json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?;
    write_artifact(&out_dir.join("run_report.json"), &report_json)?;
    write_artifact(&out_dir.join("scheduler.json"), &sched.to_json_string())?;
    write_artifact(&out_dir.join("loss_curve.csv"), &loss_curve_csv(&report))?;
    if trajectories > 0 {
        export_trajectory_csvs(&cfg, &sched, trajectories, &out_dir.join("traj"))?;
    }
    Ok(report)
}

/// `eval`: loads a scheduler, solves the student at each NFE budget, and
/// reports endpoint MSE against the teacher plus energy distance against
/// fresh target samples. Writes `eval_report.csv`.
pub fn cmd_eval(
    scheduler_path: &Path,
    config_path: &Path,
    nfes: Option<Vec<usize>>,
    out: Option<&Path>,
) -> Result<EvalReport, CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = ensure_out_dir(&cfg, out)?;
    let text = fs::read_to_string(scheduler_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", scheduler_path.display())))?;
    let target = Scheduler::from_json_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", scheduler_path.display())))?;

    let nfes = nfes.unwrap_or_else(|| cfg.eval_nfes.clone());
    let report = evaluate_scheduler(&cfg, &target, &nfes)?;
    write_artifact(&out_dir.join("eval_report.csv"), &report.to_csv_string())?;
    Ok(report)
}

/// Shared evaluation core (also used by the acceptance suite).
pub fn evaluate_scheduler(
    cfg: &ExperimentConfig,
    target: &Scheduler,
    nfes: &[usize],
) -> Result<EvalReport, CliError> {
    if nfes.is_empty() {
        return Err(CliError::Config("nfe list must be nonempty".into()));
    }
    let gmm = cfg.gmm_spec()?;
    let source = cfg.source_scheduler()?;
    let train_cfg = cfg.train_config();
    if train_cfg.val_count < 2 {
        return Err(CliError::Config(
            "evaluation needs val_count >= 2 (energy distance is a two-sample statistic)".into(),
        ));
    }
    for &nfe in nfes {
        train_cfg
            .method
            .steps_for_nfe(nfe)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let fail = |e: bezsched_core::Error| CliError::Failure(e.to_string());

    let pairs = build_pairs(
        &gmm,
        &source,
        train_cfg.val_count,
        cfg.seed.wrapping_add(SEED_EVAL_PAIRS),
        train_cfg.teacher_rtol,
        train_cfg.teacher_atol,
    )
    .map_err(fail)?;
    let teacher_ends: Vec<Vec<f64>> = pairs.iter().map(|p| p.x1_teacher.clone()).collect();
    let fresh_targets = sample_target(
        &gmm,
        train_cfg.val_count,
        cfg.seed.wrapping_add(SEED_EVAL_TARGET),
    );
    let field = GmmVelocityField::new(gmm.clone(), source.clone());
    let ctx = TransformContext::new(source.clone(), target.clone());

    let mut rows = Vec::with_capacity(nfes.len());
    for &nfe in nfes {
        let steps = train_cfg.method.steps_for_nfe(nfe).map_err(fail)?;
        let grid = make_grid(train_cfg.grid_kind, steps, &Scheduler::linear()).map_err(fail)?;
        let mut ends = Vec::with_capacity(pairs.len());
        for pair in &pairs {
            let traj =
                solve_student(&ctx, &field, &pair.x0, &grid, train_cfg.method).map_err(fail)?;
            ends.push(traj.endpoint().to_vec());
        }
        rows.push(EvalRow {
            nfe,
            endpoint_mse: endpoint_mse(&ends, &teacher_ends),
            energy_distance: energy_distance(&ends, &fresh_targets),
        });
    }
    Ok(EvalReport {
        scheduler_kind: target.kind_str().to_string(),
        method: train_cfg.method,
        trained_nfe: matches!(target, Scheduler::Bezier(_)).then_some(train_cfg.nfe),
        rows,
    })
}

/// Parses a trajectory CSV produced by the solver export. Errors cite the
/// 1-based line number.
pub fn parse_trajectory_csv(text: &str, origin: &Path) -> Result<Vec<(f64, Vec<f64>)>, CliError> {
    let mut nodes = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if !line.starts_with("time") {
                return Err(CliError::Config(format!(
                    "{}:{lineno}: expected header starting with \"time\"",
                    origin.display()
                )));
            }
            saw_header = true;
            continue;
        }
        let mut values = Vec::new();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "{}:{lineno}: malformed number {cell:?}",
                    origin.display()
                ))
            })?;
            values.push(v);
        }
        if values.len() < 3 {
            return Err(CliError::Config(format!(
                "{}:{lineno}: need time plus at least two state components",
                origin.display()
            )));
        }
        nodes.push((values[0], values[1..].to_vec()));
    }
    Ok(nodes)
}

/// `plot`: overlays trajectory CSVs into `trajectories.svg` and, when a
/// scheduler is given, draws its coefficient curves into `scheduler.svg`.
pub fn cmd_plot(
    trajectory_paths: &[PathBuf],
    scheduler_path: Option<&Path>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();

    let mut series = Vec::new();
    for path in trajectory_paths {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let nodes = parse_trajectory_csv(&text, path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        series.push(Series {
            label,
            points: nodes.iter().map(|(_, x)| (x[0], x[1])).collect(),
        });
    }
    let traj_path = out_dir.join("trajectories.svg");
    write_artifact(&traj_path, &trajectories_svg(&series))?;
    written.push(traj_path);

    if let Some(spath) = scheduler_path {
        let text = fs::read_to_string(spath)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", spath.display())))?;
        let sched = Scheduler::from_json_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", spath.display())))?;
        let label = sched.kind_str().to_string();
        let sched_path = out_dir.join("scheduler.svg");
        write_artifact(&sched_path, &scheduler_svg(&[(label, sched)]))?;
        written.push(sched_path);
    }
    Ok(written)
}

/// `verify`: runs every registered property, printing one line each.
/// Returns the failure count.
pub fn cmd_verify() -> usize {
    let reports = verify::run_all();
    let mut failures = 0;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} - {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    println!(
        "{} properties, {} failed",
        reports.len(),
        failures
    );
    failures
}

/// `fit-timesteps`: fits the configured-degree scheduler onto an explicit
/// timestep set and writes `fitted_scheduler.json` plus `fit_report.json`.
pub fn cmd_fit(
    config_path: &Path,
    timesteps: &[f64],
    tol: f64,
    out: Option<&Path>,
) -> Result<bezsched_core::FitReport, CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = ensure_out_dir(&cfg, out)?;
    let source = cfg.source_scheduler()?;
    let report = fit_scheduler_to_timesteps(&source, timesteps, cfg.degree, tol)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let sched = report
        .scheduler()
        .map_err(|e| CliError::Failure(e.to_string()))?;
    write_artifact(&out_dir.join("fitted_scheduler.json"), &sched.to_json_string())?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?;
    write_artifact(&out_dir.join("fit_report.json"), &json)?;
    info!(
        "fit residual {:.3e} after {} iterations (converged: {})",
        report.residual, report.iterations, report.converged
    );
    Ok(report)
}

/// Writes teacher / initial-student / trained-student trajectory CSVs for a
/// handful of starts, ready for `plot`. Used by examples and tests.
pub fn export_trajectory_csvs(
    cfg: &ExperimentConfig,
    trained: &Scheduler,
    count: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", out_dir.display())))?;
    let gmm = cfg.gmm_spec()?;
    let source = cfg.source_scheduler()?;
    let train_cfg = cfg.train_config();
    let fail = |e: bezsched_core::Error| CliError::Failure(e.to_string());

    let field = GmmVelocityField::new(gmm.clone(), source.clone());
    let starts = bezsched_core::sample_source(gmm.dim(), count, cfg.seed.wrapping_add(20));
    let steps = train_cfg.steps().map_err(fail)?;
    let student_grid = make_grid(train_cfg.grid_kind, steps, &Scheduler::linear()).map_err(fail)?;
    let dense_grid = make_grid(train_cfg.grid_kind, 64, &Scheduler::linear()).map_err(fail)?;
    let initial = TransformContext::new(source.clone(), Scheduler::linear());
    let tuned = TransformContext::new(source.clone(), trained.clone());

    let mut written = Vec::new();
    for (i, x0) in starts.iter().enumerate() {
        let teacher = integrate_fixed(&field, x0, &dense_grid, Method::Rk2).map_err(fail)?;
        let init =
            solve_student(&initial, &field, x0, &student_grid, train_cfg.method).map_err(fail)?;
        let trained_traj =
            solve_student(&tuned, &field, x0, &student_grid, train_cfg.method).map_err(fail)?;
        for (name, traj) in [
            ("teacher", &teacher),
            ("student-initial", &init),
            ("student-trained", &trained_traj),
        ] {
            let path = out_dir.join(format!("{name}-{i}.csv"));
            write_artifact(&path, &traj.to_csv_string())?;
            written.push(path);
        }
    }
    Ok(written)
}
