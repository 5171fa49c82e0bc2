//! Teacher-forcing optimization of Bézier scheduler logits.
//!
//! Teacher endpoints come from an adaptive solve of the source-path oracle
//! ODE; the student is a few-step fixed-grid solve along the Bézier target
//! path. The loss is the mean squared L2 gap between the two endpoints, and
//! gradients are central finite differences in logit space (at most
//! `2n + M` parameters, so numerical differentiation is cheap and solver
//! agnostic).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bezier::{bernstein, monotone_points_from_logits, softmax, LogitVector};
use crate::error::{Error, Result};
use crate::gmm::{sample_source, GmmSpec, GmmVelocityField};
use crate::scheduler::{make_grid, GridKind, Scheduler, TimeGrid};
use crate::solvers::{integrate_adaptive, integrate_fixed_shifted, Method};
use crate::transform::TransformContext;

/// Loss level past which training aborts as diverged.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Gradient-clipping threshold (global norm across every trained parameter).
const CLIP_NORM: f64 = 1.0;

/// Optimizer for the scheduler logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[serde(rename = "rmsprop")]
    RmsProp,
    Sgd,
}

/// Optimization hyperparameters.
///
/// `nfe` counts field evaluations, so RK2 runs `nfe / 2` steps. An epoch is
/// one pass over the training pairs in minibatches of `batch_size`.
/// Decoupled time offsets (one per step, fed to the field but not the
/// integrator) train under plain SGD at `lr_decoupled / nfe` when enabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nfe: usize,
    pub method: Method,
    pub grid_kind: GridKind,
    pub train_count: usize,
    pub val_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub rmsprop_momentum: f64,
    pub fd_step: f64,
    pub seed: u64,
    pub enable_decoupled: bool,
    pub lr_decoupled: f64,
    pub teacher_rtol: f64,
    pub teacher_atol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            nfe: 3,
            method: Method::Rk1,
            grid_kind: GridKind::UniformTime,
            train_count: 200,
            val_count: 200,
            epochs: 8,
            batch_size: 25,
            lr: 5e-3,
            optimizer: OptimizerKind::RmsProp,
            rmsprop_momentum: 0.9,
            fd_step: 1e-3,
            seed: 0,
            enable_decoupled: false,
            lr_decoupled: 0.1,
            teacher_rtol: 1e-6,
            teacher_atol: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 || self.val_count == 0 {
            return Err(Error::InvalidInput("pair counts must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.fd_step.is_nan() || self.fd_step <= 0.0 || self.fd_step > 1e-2 {
            return Err(Error::InvalidInput(
                "fd_step must lie in (0, 1e-2]".into(),
            ));
        }
        if self.enable_decoupled && (self.lr_decoupled.is_nan() || self.lr_decoupled <= 0.0) {
            return Err(Error::InvalidInput(
                "decoupled learning rate must be positive".into(),
            ));
        }
        self.method.steps_for_nfe(self.nfe)?;
        Ok(())
    }

    pub fn steps(&self) -> Result<usize> {
        self.method.steps_for_nfe(self.nfe)
    }

    /// Student time grid. Fixed for the whole run: the spacing is taken from
    /// the linear scheduler the Bézier target is initialized to, so the grid
    /// does not drift as the logits move.
    pub fn student_grid(&self) -> Result<TimeGrid> {
        make_grid(self.grid_kind, self.steps()?, &Scheduler::linear())
    }
}

/// One teacher-forcing sample: a source draw and the endpoint of the
/// high-accuracy teacher solve from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub x0: Vec<f64>,
    pub x1_teacher: Vec<f64>,
}

/// Trainable parameters: the two logit sets, plus optional per-step time
/// offsets fed to the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    pub logits_alpha: Vec<f64>,
    pub logits_sigma: Vec<f64>,
    pub offsets: Option<Vec<f64>>,
}

impl StudentParams {
    /// Linear initialization: all-ones logits, zero offsets.
    pub fn linear_init(degree: usize, steps: Option<usize>) -> Self {
        Self {
            logits_alpha: vec![1.0; degree],
            logits_sigma: vec![1.0; degree],
            offsets: steps.map(|m| vec![0.0; m]),
        }
    }

    pub fn scheduler(&self) -> Result<Scheduler> {
        Scheduler::bezier(
            LogitVector::new(self.logits_alpha.clone())?,
            LogitVector::new(self.logits_sigma.clone())?,
        )
    }

    fn flatten(&self) -> Vec<f64> {
        let mut v = self.logits_alpha.clone();
        v.extend_from_slice(&self.logits_sigma);
        if let Some(o) = &self.offsets {
            v.extend_from_slice(o);
        }
        v
    }

    fn unflatten(&self, flat: &[f64]) -> Self {
        let n = self.logits_alpha.len();
        let mut out = self.clone();
        out.logits_alpha.copy_from_slice(&flat[..n]);
        out.logits_sigma.copy_from_slice(&flat[n..2 * n]);
        if let Some(o) = &mut out.offsets {
            o.copy_from_slice(&flat[2 * n..]);
        }
        out
    }
}

/// Per-epoch record of one training run. Index 0 is the untouched linear
/// initialization; entry `e` is the state after epoch `e`. `selected_epoch`
/// is the checkpoint with the minimum validation loss, and the final logits
/// are that checkpoint's parameters.
///
/// `wall_time_secs` is informational and deliberately left out of the JSON
/// so that rerunning a seeded config reproduces the artifact byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub selected_epoch: usize,
    pub final_logits_alpha: Vec<f64>,
    pub final_logits_sigma: Vec<f64>,
    pub final_offsets: Option<Vec<f64>>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn initial_val_loss(&self) -> f64 {
        self.val_loss[0]
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.selected_epoch]
    }

    pub fn final_scheduler(&self) -> Result<Scheduler> {
        Scheduler::bezier(
            LogitVector::new(self.final_logits_alpha.clone())?,
            LogitVector::new(self.final_logits_sigma.clone())?,
        )
    }
}

/// Draws `count` source samples and solves each along the source path with
/// the adaptive teacher. Deterministic per seed.
pub fn build_pairs(
    gmm: &GmmSpec,
    source: &Scheduler,
    count: usize,
    seed: u64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<TrainPair>> {
    if count == 0 {
        return Err(Error::InvalidInput("pair count must be >= 1".into()));
    }
    let field = GmmVelocityField::new(gmm.clone(), source.clone());
    let starts = sample_source(gmm.dim(), count, seed);
    starts
        .into_par_iter()
        .map(|x0| {
            let (x1, _) = integrate_adaptive(&field, &x0, 0.0, 1.0, rtol, atol)?;
            Ok(TrainPair { x0, x1_teacher: x1 })
        })
        .collect()
}

/// Mean squared endpoint gap between the few-step student and the teacher
/// over the given pairs.
pub fn loss(
    params: &StudentParams,
    source: &Scheduler,
    gmm: &GmmSpec,
    pairs: &[TrainPair],
    cfg: &TrainConfig,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("loss needs at least one pair".into()));
    }
    let target = params.scheduler()?;
    let ctx = TransformContext::new(source.clone(), target);
    let field = GmmVelocityField::new(gmm.clone(), source.clone());
    let transformed = ctx.transformed_field(&field);
    let grid = cfg.student_grid()?;
    let shifts = params.offsets.as_deref();
    let per_pair: Vec<f64> = pairs
        .par_iter()
        .map(|pair| -> Result<f64> {
            let traj =
                integrate_fixed_shifted(&transformed, &pair.x0, &grid, cfg.method, shifts)?;
            let end = traj.endpoint();
            Ok(end
                .iter()
                .zip(&pair.x1_teacher)
                .map(|(a, b)| (a - b) * (a - b))
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.iter().sum::<f64>() / pairs.len() as f64)
}

/// Central finite-difference gradient of [`loss`] in flattened parameter
/// order (alpha logits, sigma logits, then offsets when enabled). The step
/// for coordinate `i` is `fd_step * max(1, |theta_i|)`.
pub fn gradient(
    params: &StudentParams,
    source: &Scheduler,
    gmm: &GmmSpec,
    pairs: &[TrainPair],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let flat = params.flatten();
    let grads: Vec<f64> = (0..flat.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let h = cfg.fd_step * flat[i].abs().max(1.0);
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let lp = loss(&params.unflatten(&plus), source, gmm, pairs, cfg)?;
            let lm = loss(&params.unflatten(&minus), source, gmm, pairs, cfg)?;
            let g = (lp - lm) / (2.0 * h);
            if !g.is_finite() {
                return Err(Error::BadGradient { coord: i });
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    Ok(grads)
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
/// pre-clip norm.
pub(crate) fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// RMSprop with momentum (smoothing 0.99, epsilon 1e-8, no weight decay):
///
/// ```text
/// v <- 0.99 v + 0.01 g^2
/// b <- momentum b + g / (sqrt(v) + eps)
/// theta <- theta - lr b
/// ```
struct RmsProp {
    lr: f64,
    momentum: f64,
    sq_avg: Vec<f64>,
    buf: Vec<f64>,
}

impl RmsProp {
    const SMOOTHING: f64 = 0.99;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, momentum: f64, len: usize) -> Self {
        Self {
            lr,
            momentum,
            sq_avg: vec![0.0; len],
            buf: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for i in 0..params.len() {
            self.sq_avg[i] =
                Self::SMOOTHING * self.sq_avg[i] + (1.0 - Self::SMOOTHING) * grads[i] * grads[i];
            self.buf[i] =
                self.momentum * self.buf[i] + grads[i] / (self.sq_avg[i].sqrt() + Self::EPS);
            params[i] -= self.lr * self.buf[i];
        }
    }

    fn decay_lr(&mut self, factor: f64) {
        self.lr *= factor;
        for b in &mut self.buf {
            *b = 0.0;
        }
    }
}

fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Runs the full teacher-forcing optimization and returns the per-epoch
/// record with the best-validation checkpoint selected.
pub fn train(
    cfg: &TrainConfig,
    degree: usize,
    gmm: &GmmSpec,
    source: &Scheduler,
) -> Result<RunReport> {
    cfg.validate()?;
    if degree < 1 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    let started = Instant::now();
    let steps = cfg.steps()?;

    // seed layout: pairs, validation pairs, epoch shuffling
    let train_pairs = build_pairs(
        gmm,
        source,
        cfg.train_count,
        cfg.seed,
        cfg.teacher_rtol,
        cfg.teacher_atol,
    )?;
    let val_pairs = build_pairs(
        gmm,
        source,
        cfg.val_count,
        cfg.seed.wrapping_add(1),
        cfg.teacher_rtol,
        cfg.teacher_atol,
    )?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut params = StudentParams::linear_init(degree, cfg.enable_decoupled.then_some(steps));
    let sched_len = 2 * degree;
    let mut rms = RmsProp::new(cfg.lr, cfg.rmsprop_momentum, sched_len);
    let lr_offsets = cfg.lr_decoupled / cfg.nfe as f64;

    let mut train_losses = vec![loss(&params, source, gmm, &train_pairs, cfg)?];
    let mut val_losses = vec![loss(&params, source, gmm, &val_pairs, cfg)?];
    let mut best = (params.clone(), val_losses[0], 0usize);

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainPair> = chunk.iter().map(|&i| train_pairs[i].clone()).collect();
            let mut grads = gradient(&params, source, gmm, &batch, cfg)?;
            clip_global_norm(&mut grads, CLIP_NORM);

            let mut flat = params.flatten();
            match cfg.optimizer {
                OptimizerKind::RmsProp => rms.step(&mut flat[..sched_len], &grads[..sched_len]),
                OptimizerKind::Sgd => sgd_step(&mut flat[..sched_len], &grads[..sched_len], cfg.lr),
            }
            if params.offsets.is_some() {
                sgd_step(&mut flat[sched_len..], &grads[sched_len..], lr_offsets);
            }
            params = params.unflatten(&flat);
        }

        let tl = loss(&params, source, gmm, &train_pairs, cfg)?;
        let vl = loss(&params, source, gmm, &val_pairs, cfg)?;
        if !tl.is_finite() || tl > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                loss: tl,
                limit: DIVERGENCE_LIMIT,
                epoch,
            });
        }
        train_losses.push(tl);
        val_losses.push(vl);
        if vl < best.1 {
            best = (params.clone(), vl, epoch);
        }
    }

    Ok(RunReport {
        train_loss: train_losses,
        val_loss: val_losses,
        selected_epoch: best.2,
        final_logits_alpha: best.0.logits_alpha,
        final_logits_sigma: best.0.logits_sigma,
        final_offsets: best.0.offsets,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Result of fitting a Bézier scheduler onto an explicit timestep set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub logits_alpha: Vec<f64>,
    pub logits_sigma: Vec<f64>,
    /// Largest coefficient mismatch over the fit knots.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitReport {
    pub fn scheduler(&self) -> Result<Scheduler> {
        Scheduler::bezier(
            LogitVector::new(self.logits_alpha.clone())?,
            LogitVector::new(self.logits_sigma.clone())?,
        )
    }
}

/// Finds logits whose scheduler interpolates the source coefficients at the
/// given timesteps: at uniform knots `s_k = k / M`,
/// `alpha_target(s_k) = alpha(t_k)` and `sigma_target(s_k) = sigma(t_k)`.
///
/// Any timestep set a grid-only search can reach is therefore reproduced
/// inside the Bézier family (the trajectory-space inclusion, made
/// constructive). The cumulative-softmax chart has no closed-form inverse,
/// so the interpolation is solved by gradient descent on the logits with the
/// exact chain-rule gradient; a residual above `tol` after the iteration
/// budget is reported as non-convergence, not an error.
pub fn fit_scheduler_to_timesteps(
    source: &Scheduler,
    timesteps: &[f64],
    degree: usize,
    tol: f64,
) -> Result<FitReport> {
    if timesteps.len() < 2 {
        return Err(Error::InvalidInput("need at least two timesteps".into()));
    }
    if timesteps[0] != 0.0 || *timesteps.last().unwrap() != 1.0 {
        return Err(Error::InvalidInput(
            "timesteps must start at exactly 0 and end at exactly 1".into(),
        ));
    }
    if timesteps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("timesteps must strictly increase".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let m = timesteps.len() - 1;
    if degree < m {
        return Err(Error::InvalidInput(format!(
            "degree {degree} cannot interpolate {m} steps (need degree >= steps)"
        )));
    }

    // interior knots only: the endpoints match by construction
    let knots: Vec<f64> = (1..m).map(|k| k as f64 / m as f64).collect();
    let mut targets_alpha = Vec::with_capacity(knots.len());
    let mut targets_sigma = Vec::with_capacity(knots.len());
    for &t in &timesteps[1..m] {
        let e = source.eval(t)?;
        targets_alpha.push(e.alpha);
        // fit the ascending complement so both curves share one code path
        targets_sigma.push(1.0 - e.sigma);
    }
    // Bernstein basis at the knots
    let basis: Vec<Vec<f64>> = knots
        .iter()
        .map(|&s| (0..=degree).map(|i| bernstein(i, degree, s).unwrap()).collect())
        .collect();

    let mut logits_alpha = polygon_init(&knots, &targets_alpha, degree);
    let mut logits_sigma = polygon_init(&knots, &targets_sigma, degree);
    let residual_of = |la: &[f64], ls: &[f64]| -> f64 {
        let ca = monotone_points_from_logits(&LogitVector::new(la.to_vec()).unwrap());
        let cs = monotone_points_from_logits(&LogitVector::new(ls.to_vec()).unwrap());
        let mut worst = 0.0f64;
        for (row, (ta, ts)) in basis
            .iter()
            .zip(targets_alpha.iter().zip(&targets_sigma))
        {
            let va: f64 = row.iter().zip(ca.points()).map(|(b, c)| b * c).sum();
            let vs: f64 = row.iter().zip(cs.points()).map(|(b, c)| b * c).sum();
            worst = worst.max((va - ta).abs()).max((vs - ts).abs());
        }
        worst
    };

    let mut best_alpha = logits_alpha.clone();
    let mut best_sigma = logits_sigma.clone();
    let mut best_residual = residual_of(&logits_alpha, &logits_sigma);
    let target_residual = (0.01 * tol).max(1e-10);
    let max_iterations = 200_000;
    let mut iterations = 0;

    if best_residual > target_residual {
        let mut opt_a = RmsProp::new(5e-2, 0.9, degree);
        let mut opt_s = RmsProp::new(5e-2, 0.9, degree);
        let mut since_improvement = 0usize;
        for it in 1..=max_iterations {
            iterations = it;
            let ga = fit_gradient(&logits_alpha, &basis, &targets_alpha, degree);
            let gs = fit_gradient(&logits_sigma, &basis, &targets_sigma, degree);
            opt_a.step(&mut logits_alpha, &ga);
            opt_s.step(&mut logits_sigma, &gs);
            let r = residual_of(&logits_alpha, &logits_sigma);
            if r < best_residual {
                best_residual = r;
                best_alpha.copy_from_slice(&logits_alpha);
                best_sigma.copy_from_slice(&logits_sigma);
                since_improvement = 0;
            } else {
                since_improvement += 1;
                // plateau: anneal the step size and restart from the best
                if since_improvement >= 3000 {
                    opt_a.decay_lr(0.3);
                    opt_s.decay_lr(0.3);
                    logits_alpha.copy_from_slice(&best_alpha);
                    logits_sigma.copy_from_slice(&best_sigma);
                    since_improvement = 0;
                }
            }
            if best_residual <= target_residual {
                break;
            }
        }
    }

    Ok(FitReport {
        logits_alpha: best_alpha,
        logits_sigma: best_sigma,
        residual: best_residual,
        converged: best_residual <= tol,
        iterations,
    })
}

/// Warm start for the fit: place each control point on the piecewise-linear
/// interpolant of the knot targets (with the fixed 0/1 endpoints), then read
/// logits off the log point gaps. The Bézier curve of that control polygon
/// already tracks the targets up to Bernstein smoothing, which leaves the
/// descent a short, well-conditioned path.
fn polygon_init(knots: &[f64], targets: &[f64], degree: usize) -> Vec<f64> {
    let mut xs = vec![0.0];
    xs.extend_from_slice(knots);
    xs.push(1.0);
    let mut ys = vec![0.0];
    ys.extend_from_slice(targets);
    ys.push(1.0);
    let interp = |x: f64| -> f64 {
        let j = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
        let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
        ys[j - 1] + w * (ys[j] - ys[j - 1])
    };
    let mut prev = 0.0;
    (1..=degree)
        .map(|i| {
            let c = if i == degree { 1.0 } else { interp(i as f64 / degree as f64) };
            let gap = (c - prev).max(1e-9);
            prev = c;
            gap.ln()
        })
        .collect()
}

/// Chain-rule gradient of the squared interpolation residual with respect to
/// the logits: residual -> control points (Bernstein rows) -> softmax
/// partial sums -> logits.
fn fit_gradient(logits: &[f64], basis: &[Vec<f64>], targets: &[f64], degree: usize) -> Vec<f64> {
    let w = softmax(logits);
    // control points (ascending chart)
    let mut points = vec![0.0; degree + 1];
    let mut acc = 0.0;
    for i in 1..degree {
        acc += w[i - 1];
        points[i] = acc;
    }
    points[degree] = 1.0;

    // d residual^2 / d C_i for interior i
    let mut g_points = vec![0.0; degree + 1];
    for (row, t) in basis.iter().zip(targets) {
        let value: f64 = row.iter().zip(&points).map(|(b, c)| b * c).sum();
        let r = 2.0 * (value - t);
        for i in 1..degree {
            g_points[i] += r * row[i];
        }
    }
    // C_i = sum_{j <= i} w_j  =>  dF/dw_j = sum_{i >= j} dF/dC_i
    let mut g_w = vec![0.0; degree];
    let mut suffix = 0.0;
    for i in (1..degree).rev() {
        suffix += g_points[i];
        g_w[i - 1] = suffix;
    }
    // softmax Jacobian: dw_j/dtheta_l = w_j (delta - w_l)
    let dot: f64 = g_w.iter().zip(&w).map(|(g, wj)| g * wj).sum();
    (0..degree).map(|l| w[l] * (g_w[l] - dot)).collect()
}
