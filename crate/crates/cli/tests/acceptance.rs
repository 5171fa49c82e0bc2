//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line with its measured margin. Run with
//! `cargo test -p bezsched-cli --test acceptance` (add `-- --nocapture`
//! to see the lines as they complete).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use bezsched_cli::commands::{cmd_eval, cmd_plot, cmd_train, export_trajectory_csvs};
use bezsched_cli::config::ExperimentConfig;
use bezsched_core::metrics::endpoint_mse;
use bezsched_core::{
    bernstein, bezier_derivative, bezier_eval, build_pairs, fit_scheduler_to_timesteps,
    integrate_adaptive, integrate_fixed, loss, make_grid, monotone_points_from_logits, train,
    GmmSpec, GmmVelocityField, GridKind, LogitVector, Method, Scheduler, StudentParams, TimeGrid,
    TrainConfig, TransformContext,
};

fn random_bezier(rng: &mut ChaCha8Rng, degree: usize) -> Scheduler {
    let la: Vec<f64> = (0..degree).map(|_| rng.random_range(-1.5..1.5)).collect();
    let ls: Vec<f64> = (0..degree).map(|_| rng.random_range(-1.5..1.5)).collect();
    Scheduler::bezier(LogitVector::new(la).unwrap(), LogitVector::new(ls).unwrap()).unwrap()
}

#[test]
fn c1_bezier_algebra_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // partition of unity within 1e-12
    let mut worst_unity = 0.0f64;
    for n in [1usize, 2, 3, 8, 16, 32] {
        for k in 0..=200 {
            let l = k as f64 / 200.0;
            let sum: f64 = (0..=n).map(|i| bernstein(i, n, l).unwrap()).sum();
            worst_unity = worst_unity.max((sum - 1.0).abs());
        }
    }
    assert!(worst_unity <= 1e-12, "partition of unity off by {worst_unity:.2e}");

    // endpoint interpolation exact, monotonicity on 1000 random logit draws
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c = monotone_points_from_logits(&LogitVector::new(logits).unwrap());
        assert_eq!(bezier_eval(&c, 0.0).unwrap(), 0.0);
        assert_eq!(bezier_eval(&c, 1.0).unwrap(), 1.0);
        let mut prev = 0.0;
        for k in 1..=100 {
            let v = bezier_eval(&c, k as f64 / 100.0).unwrap();
            assert!(v >= prev - 1e-12, "monotonicity violated");
            prev = v;
        }
    }

    // derivative vs central finite differences within 1e-6
    let h = 1e-6;
    let mut worst_fd = 0.0f64;
    for _ in 0..200 {
        let logits: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = monotone_points_from_logits(&LogitVector::new(logits).unwrap());
        let l = rng.random_range(0.01..0.99);
        let fd = (bezier_eval(&c, l + h).unwrap() - bezier_eval(&c, l - h).unwrap()) / (2.0 * h);
        worst_fd = worst_fd.max((fd - bezier_derivative(&c, l).unwrap()).abs());
    }
    assert!(worst_fd <= 1e-6, "derivative gap {worst_fd:.2e}");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "bezier suite took {elapsed:.1}s (budget 5s)");
    println!(
        "[PASS] C1 bezier algebra: unity {worst_unity:.1e}, fd gap {worst_fd:.1e}, {elapsed:.2}s"
    );
}

#[test]
fn c2_scheduler_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    // boundary conditions exact for every kind and any logits
    let mut scheds = vec![Scheduler::linear(), Scheduler::vp()];
    for _ in 0..50 {
        scheds.push(random_bezier(&mut rng, 16));
    }
    for sched in &scheds {
        let a = sched.eval(0.0).unwrap();
        let b = sched.eval(1.0).unwrap();
        assert_eq!((a.alpha, a.sigma), (0.0, 1.0), "{}", sched.kind_str());
        assert_eq!((b.alpha, b.sigma), (1.0, 0.0), "{}", sched.kind_str());
    }

    // snr strictly increasing over 1000 random schedulers
    for _ in 0..1000 {
        let sched = random_bezier(&mut rng, 8);
        let mut prev = sched.snr_ratio(0.0).unwrap();
        for k in 1..=100 {
            let r = sched.snr_ratio(k as f64 / 101.0).unwrap();
            assert!(r > prev, "snr not strictly increasing");
            prev = r;
        }
    }

    // invert_snr round trip within 1e-9 relative
    let mut worst_rt = 0.0f64;
    for _ in 0..500 {
        let sched = random_bezier(&mut rng, 12);
        let y = rng.random_range(-7.0f64..7.0).exp();
        let back = sched.snr_ratio(sched.invert_snr(y).unwrap()).unwrap();
        worst_rt = worst_rt.max((back - y).abs() / y.max(1.0));
    }
    assert!(worst_rt <= 1e-9, "round trip error {worst_rt:.2e}");

    // all-equal logits reproduce the linear scheduler within 1e-10
    let init = Scheduler::bezier_linear_init(32).unwrap();
    let linear = Scheduler::linear();
    let mut worst_init = 0.0f64;
    for k in 0..=2000 {
        let s = k as f64 / 2000.0;
        let a = init.eval(s).unwrap();
        let b = linear.eval(s).unwrap();
        worst_init = worst_init.max((a.alpha - b.alpha).abs()).max((a.sigma - b.sigma).abs());
    }
    assert!(worst_init <= 1e-10, "linear-init gap {worst_init:.2e}");

    println!("[PASS] C2 scheduler suite: round trip {worst_rt:.1e}, linear init {worst_init:.1e}");
}

#[test]
fn c3_endpoint_preservation_over_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gmm = GmmSpec::benchmark_circle8();
    let source = Scheduler::linear();
    let field = GmmVelocityField::new(gmm.clone(), source.clone());
    let rtol = 1e-8;
    let atol = 1e-10;

    let starts = bezsched_core::sample_source(2, 50, 33);
    // the source-path endpoints are shared by every target scheduler
    let source_ends: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|x0| integrate_adaptive(&field, x0, 0.0, 1.0, rtol, atol).unwrap().0)
        .collect();

    let targets: Vec<Scheduler> = (0..20).map(|_| random_bezier(&mut rng, 32)).collect();
    let worst = targets
        .par_iter()
        .map(|target| {
            let ctx = TransformContext::new(source.clone(), target.clone());
            let transformed = ctx.transformed_field(&field);
            let mut worst = 0.0f64;
            for (x0, src_end) in starts.iter().zip(&source_ends) {
                let (tgt_end, _) =
                    integrate_adaptive(&transformed, x0, 0.0, 1.0, rtol, atol).unwrap();
                let gap: f64 = src_end
                    .iter()
                    .zip(&tgt_end)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(gap);
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst <= 1e-4, "endpoint gap {worst:.3e} exceeds 1e-4");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.0}s (budget 120s)");
    println!(
        "[PASS] C3 endpoint preservation: max L2 gap {worst:.2e} over 20 schedulers x 50 starts, {elapsed:.1}s"
    );
}

#[test]
fn c4_single_gaussian_flow_map() {
    let mu = [1.7, -0.9];
    let std = 0.6;
    let gmm = GmmSpec::new(vec![1.0], vec![mu.to_vec()], vec![std * std]).unwrap();
    let field = GmmVelocityField::new(gmm, Scheduler::linear());
    let starts = bezsched_core::sample_source(2, 100, 44);
    let mut worst = 0.0f64;
    for x0 in &starts {
        let (end, _) = integrate_adaptive(&field, x0, 0.0, 1.0, 1e-8, 1e-10).unwrap();
        for d in 0..2 {
            worst = worst.max((end[d] - (mu[d] + std * x0[d])).abs());
        }
    }
    assert!(worst <= 1e-4, "affine flow map gap {worst:.3e}");
    println!("[PASS] C4 single-gaussian flow map: max gap {worst:.2e} over 100 starts");
}

#[test]
fn c5_solver_orders_and_nfe() {
    let f = |x: &[f64], _s: f64| -> bezsched_core::Result<Vec<f64>> { Ok(x.to_vec()) };
    let truth = std::f64::consts::E;
    let mut errs1 = Vec::new();
    let mut errs2 = Vec::new();
    for m in [64usize, 128, 256, 512] {
        let grid = make_grid(GridKind::UniformTime, m, &Scheduler::linear()).unwrap();
        let t1 = integrate_fixed(&f, &[1.0], &grid, Method::Rk1).unwrap();
        let t2 = integrate_fixed(&f, &[1.0], &grid, Method::Rk2).unwrap();
        assert_eq!(t1.nfe(), m, "rk1 nfe accounting");
        assert_eq!(t2.nfe(), 2 * m, "rk2 nfe accounting");
        errs1.push((t1.endpoint()[0] - truth).abs());
        errs2.push((t2.endpoint()[0] - truth).abs());
    }
    let mut factors1 = Vec::new();
    let mut factors2 = Vec::new();
    for w in errs1.windows(2) {
        let f = w[0] / w[1];
        assert!((1.8..=2.2).contains(&f), "rk1 factor {f:.3}");
        factors1.push(f);
    }
    for w in errs2.windows(2) {
        let f = w[0] / w[1];
        assert!((3.6..=4.4).contains(&f), "rk2 factor {f:.3}");
        factors2.push(f);
    }
    println!(
        "[PASS] C5 solver orders: rk1 factors {factors1:.3?}, rk2 factors {factors2:.3?}, nfe exact"
    );
}

#[test]
fn c6_trajectory_space_inclusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gmm = GmmSpec::benchmark_circle8();
    let source = Scheduler::linear();
    let field = GmmVelocityField::new(gmm.clone(), source.clone());

    // inclusion direction: ten random monotone 4-step grids are realized by
    // fitted schedulers, reproducing the source-path states at the knots
    let mut worst_residual = 0.0f64;
    let mut worst_state_gap = 0.0f64;
    for _ in 0..10 {
        let mut interior: Vec<f64> = (0..3).map(|_| rng.random_range(0.08..0.92)).collect();
        interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // keep knots separated so sigma stays away from 0 at the last one
        while interior.windows(2).any(|w| w[1] - w[0] < 0.05) {
            interior = (0..3).map(|_| rng.random_range(0.08..0.92)).collect();
            interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let mut timesteps = vec![0.0];
        timesteps.extend(interior);
        timesteps.push(1.0);

        let fit = fit_scheduler_to_timesteps(&source, &timesteps, 32, 1e-4).unwrap();
        assert!(fit.converged, "fit residual {:.2e}", fit.residual);
        worst_residual = worst_residual.max(fit.residual);

        let ctx = TransformContext::new(source.clone(), fit.scheduler().unwrap());
        let transformed = ctx.transformed_field(&field);
        let m = timesteps.len() - 1;
        for x0 in [[0.6, -0.3], [-1.1, 0.8]] {
            let mut src_state = x0.to_vec();
            let mut tgt_state = x0.to_vec();
            for k in 1..=m {
                src_state = integrate_adaptive(
                    &field,
                    &src_state,
                    timesteps[k - 1],
                    timesteps[k],
                    1e-8,
                    1e-10,
                )
                .unwrap()
                .0;
                tgt_state = integrate_adaptive(
                    &transformed,
                    &tgt_state,
                    (k - 1) as f64 / m as f64,
                    k as f64 / m as f64,
                    1e-8,
                    1e-10,
                )
                .unwrap()
                .0;
                let gap: f64 = src_state
                    .iter()
                    .zip(&tgt_state)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                worst_state_gap = worst_state_gap.max(gap);
            }
        }
    }
    assert!(worst_residual < 1e-4, "residual {worst_residual:.2e}");
    assert!(worst_state_gap < 1e-3, "state gap {worst_state_gap:.2e}");

    // strictness: a trained scheduler leaves the grid-only family
    // (c(s_k) != 1) and lands below the best of a thousand-point sweep over
    // the single interior timestep of an NFE=2 Euler grid
    let pairs = build_pairs(&gmm, &source, 200, 42, 1e-6, 1e-8).unwrap();
    let teacher_ends: Vec<Vec<f64>> = pairs.iter().map(|p| p.x1_teacher.clone()).collect();
    let best_grid_loss = (1..1000usize)
        .into_par_iter()
        .map(|j| {
            let tau = j as f64 / 1000.0;
            let grid = TimeGrid::from_times(vec![0.0, tau, 1.0]).unwrap();
            let ends: Vec<Vec<f64>> = pairs
                .iter()
                .map(|p| {
                    integrate_fixed(&field, &p.x0, &grid, Method::Rk1)
                        .unwrap()
                        .endpoint()
                        .to_vec()
                })
                .collect();
            endpoint_mse(&ends, &teacher_ends)
        })
        .reduce(|| f64::INFINITY, f64::min);

    let cfg = TrainConfig {
        nfe: 2,
        method: Method::Rk1,
        train_count: 200,
        val_count: 200,
        epochs: 8,
        batch_size: 25,
        seed: 42,
        ..TrainConfig::default()
    };
    let report = train(&cfg, 32, &gmm, &source).unwrap();
    let params = StudentParams {
        logits_alpha: report.final_logits_alpha.clone(),
        logits_sigma: report.final_logits_sigma.clone(),
        offsets: None,
    };
    let trained_loss = loss(&params, &source, &gmm, &pairs, &cfg).unwrap();
    assert!(
        trained_loss < best_grid_loss,
        "trained {trained_loss:.4} vs best grid {best_grid_loss:.4}"
    );
    let ctx = TransformContext::new(source.clone(), report.final_scheduler().unwrap());
    let scale_mid = ctx.scale(0.5).unwrap();
    assert!(
        (scale_mid - 1.0).abs() > 1e-3,
        "trained scheduler stayed on the source path (c = {scale_mid})"
    );
    println!(
        "[PASS] C6 trajectory-space inclusion: residual {worst_residual:.1e}, states {worst_state_gap:.1e}; \
         strictness: trained {trained_loss:.3} < sweep {best_grid_loss:.3} with c(0.5) = {scale_mid:.3}"
    );
}

#[test]
fn c7_training_halves_endpoint_mse() {
    let started = Instant::now();
    let gmm = GmmSpec::benchmark_circle8();
    let source = Scheduler::linear();
    let cfg = TrainConfig {
        nfe: 3,
        method: Method::Rk1,
        grid_kind: GridKind::UniformTime,
        train_count: 200,
        val_count: 200,
        epochs: 8,
        batch_size: 25,
        lr: 5e-3,
        seed: 42,
        ..TrainConfig::default()
    };
    let report = train(&cfg, 32, &gmm, &source).unwrap();
    let ratio = report.best_val_loss() / report.initial_val_loss();
    assert!(
        ratio <= 0.5,
        "best/initial validation MSE ratio {ratio:.3} exceeds 0.5"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 900.0, "training took {elapsed:.0}s (budget 15min)");
    println!(
        "[PASS] C7 training run: val MSE {:.4} -> {:.4} (ratio {ratio:.3}) in {elapsed:.1}s",
        report.initial_val_loss(),
        report.best_val_loss()
    );
}

#[test]
fn c8_generalizes_to_unseen_nfe() {
    // diffusion-style setup: SNR-uniform grids, where few-step placement
    // matters at this scale and the learned path transfers across budgets
    let gmm = GmmSpec::benchmark_circle8();
    let source = Scheduler::linear();
    let cfg = TrainConfig {
        nfe: 10,
        method: Method::Rk2,
        grid_kind: GridKind::UniformSnr,
        train_count: 200,
        val_count: 200,
        epochs: 8,
        batch_size: 25,
        seed: 42,
        ..TrainConfig::default()
    };
    let report = train(&cfg, 32, &gmm, &source).unwrap();
    let trained = report.final_scheduler().unwrap();
    let linear = Scheduler::linear();

    let pairs = build_pairs(&gmm, &source, 200, 1042, 1e-6, 1e-8).unwrap();
    let teacher_ends: Vec<Vec<f64>> = pairs.iter().map(|p| p.x1_teacher.clone()).collect();
    let field = GmmVelocityField::new(gmm.clone(), source.clone());
    let mse_at = |sched: &Scheduler, nfe: usize| -> f64 {
        let steps = Method::Rk2.steps_for_nfe(nfe).unwrap();
        let grid = make_grid(GridKind::UniformSnr, steps, &Scheduler::linear()).unwrap();
        let ctx = TransformContext::new(source.clone(), sched.clone());
        let ends: Vec<Vec<f64>> = pairs
            .iter()
            .map(|p| {
                bezsched_core::solve_student(&ctx, &field, &p.x0, &grid, Method::Rk2)
                    .unwrap()
                    .endpoint()
                    .to_vec()
            })
            .collect();
        endpoint_mse(&ends, &teacher_ends)
    };

    let mut summary = String::new();
    for nfe in [6usize, 8] {
        let m_trained = mse_at(&trained, nfe);
        let m_linear = mse_at(&linear, nfe);
        assert!(
            m_trained < m_linear,
            "nfe {nfe}: trained {m_trained:.4} not below linear {m_linear:.4}"
        );
        summary.push_str(&format!(" nfe{nfe} {m_trained:.3}<{m_linear:.3}"));
    }
    println!("[PASS] C8 unseen-NFE generalization (trained at 10, rk2):{summary}");
}

#[test]
fn c9_artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 7
degree = 16
eval_nfes = [4, 6]

[gmm]
preset = "circle8"

[train]
nfe = 3
method = "rk1"
train_count = 24
val_count = 24
epochs = 2
batch_size = 12
"#,
    )
    .unwrap();

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    cmd_train(&config_path, Some(&out_a), None, 0).unwrap();
    cmd_train(&config_path, Some(&out_b), None, 0).unwrap();
    for name in ["run_report.json", "scheduler.json", "loss_curve.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
        assert!(!a.is_empty());
    }

    let sched_path = out_a.join("scheduler.json");
    cmd_eval(&sched_path, &config_path, None, Some(&out_a)).unwrap();
    cmd_eval(&sched_path, &config_path, None, Some(&out_b)).unwrap();
    let ea = std::fs::read(out_a.join("eval_report.csv")).unwrap();
    let eb = std::fs::read(out_b.join("eval_report.csv")).unwrap();
    assert_eq!(ea, eb, "eval_report.csv differs between reruns");

    // plotting: trajectory exports + svg, byte-identical across reruns
    let cfg = ExperimentConfig::load(&config_path).unwrap();
    let trained = Scheduler::from_json_str(&String::from_utf8(
        std::fs::read(&sched_path).unwrap(),
    )
    .unwrap())
    .unwrap();
    let csv_a = export_trajectory_csvs(&cfg, &trained, 2, &out_a.join("traj")).unwrap();
    let csv_b = export_trajectory_csvs(&cfg, &trained, 2, &out_b.join("traj")).unwrap();
    for (a, b) in csv_a.iter().zip(&csv_b) {
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(b).unwrap(),
            "trajectory csv differs"
        );
    }
    cmd_plot(&csv_a, Some(&sched_path), &out_a.join("plots")).unwrap();
    cmd_plot(&csv_b, Some(&sched_path), &out_b.join("plots")).unwrap();
    for name in ["trajectories.svg", "scheduler.svg"] {
        let a = std::fs::read(out_a.join("plots").join(name)).unwrap();
        let b = std::fs::read(out_b.join("plots").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    println!("[PASS] C9 determinism: train/eval/plot artifacts byte-identical across reruns");
}
