//! Few-step ODE sampling with learned interpolation schedulers.
//!
//! A stochastic-interpolant path `x(s) = alpha(s) x1 + sigma(s) x0` is fixed
//! by its scheduler `(alpha, sigma)`. This crate parameterizes schedulers as
//! monotone 1D Bézier curves (cumulative-softmax control points), transforms
//! a source-path velocity field onto the learned target path without moving
//! the endpoint marginals, and trains the control points so that a few-step
//! Runge-Kutta solve matches a high-accuracy adaptive teacher solve from the
//! same starting noise. Exact Gaussian-mixture velocity fields stand in for
//! a pretrained network, which keeps every claim checkable in closed form.

pub mod bezier;
pub mod error;
pub mod field;
pub mod gmm;
pub mod metrics;
pub mod scheduler;
pub mod solvers;
pub mod trainer;
pub mod transform;
pub mod verify;

pub use bezier::{
    bernstein, bezier_derivative, bezier_eval, monotone_points_from_logits, ControlVector,
    LogitVector,
};
pub use error::{Error, Result};
pub use field::VectorField;
pub use gmm::{sample_source, sample_target, GmmSpec, GmmVelocityField};
pub use scheduler::{make_grid, GridKind, Scheduler, SchedulerEval, TimeGrid, DEFAULT_DEGREE};
pub use solvers::{integrate_adaptive, integrate_fixed, solve_student, Method, Trajectory};
pub use trainer::{
    build_pairs, fit_scheduler_to_timesteps, gradient, loss, train, FitReport, OptimizerKind,
    RunReport, StudentParams, TrainConfig, TrainPair,
};
pub use transform::TransformContext;
