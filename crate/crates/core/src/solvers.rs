//! Runge-Kutta integrators: fixed-step RK1 (Euler) and RK2 (explicit
//! midpoint) student solvers over arbitrary time grids, and an adaptive
//! Dormand-Prince 5(4) teacher with PI step control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::scheduler::TimeGrid;
use crate::transform::TransformContext;

/// Default teacher tolerances; chosen so teacher error is negligible against
/// any few-step student error.
pub const TEACHER_RTOL: f64 = 1e-6;
pub const TEACHER_ATOL: f64 = 1e-8;

const MIN_STEP: f64 = 1e-12;
const MAX_STEPS: usize = 1_000_000;

/// Fixed-step method. RK1 spends one field evaluation per step, RK2 two, so
/// an RK2 budget must be an even evaluation count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk1,
    Rk2,
}

impl Method {
    pub fn evals_per_step(self) -> usize {
        match self {
            Method::Rk1 => 1,
            Method::Rk2 => 2,
        }
    }

    /// Steps `M` realizing an evaluation budget.
    pub fn steps_for_nfe(self, nfe: usize) -> Result<usize> {
        if nfe == 0 {
            return Err(Error::InvalidInput("nfe must be >= 1".into()));
        }
        match self {
            Method::Rk1 => Ok(nfe),
            Method::Rk2 => {
                if !nfe.is_multiple_of(2) {
                    Err(Error::InvalidInput(format!(
                        "rk2 supports even nfe only, got {nfe}"
                    )))
                } else {
                    Ok(nfe / 2)
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rk1 => "rk1",
            Method::Rk2 => "rk2",
        }
    }
}

/// Ordered `(time, state)` records from one fixed-grid solve, plus the exact
/// count of field evaluations spent producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    nodes: Vec<(f64, Vec<f64>)>,
    nfe: usize,
}

impl Trajectory {
    pub fn nodes(&self) -> &[(f64, Vec<f64>)] {
        &self.nodes
    }

    pub fn nfe(&self) -> usize {
        self.nfe
    }

    pub fn endpoint(&self) -> &[f64] {
        &self.nodes.last().expect("trajectory is nonempty").1
    }

    /// CSV export: `# nfe=<count>` header comment, a column header, then one
    /// row per node.
    pub fn to_csv_string(&self) -> String {
        let dim = self.nodes[0].1.len();
        let mut out = format!("# nfe={}\n", self.nfe);
        out.push_str("time");
        for d in 0..dim {
            out.push_str(&format!(",x{d}"));
        }
        out.push('\n');
        for (t, state) in &self.nodes {
            out.push_str(&format!("{t:.17e}"));
            for v in state {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Integrates `x' = f(x, s)` across the grid with the requested fixed-step
/// method, recording the state at every grid node.
pub fn integrate_fixed<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    grid: &TimeGrid,
    method: Method,
) -> Result<Trajectory> {
    integrate_fixed_shifted(field, x0, grid, method, None)
}

/// Fixed-step integration where the field is *evaluated* at per-step shifted
/// times while stepping along the true grid. Backs the decoupled-timestep
/// training option; `shifts` holds one offset per step and shifted times are
/// clamped to `[0, 1]`.
pub(crate) fn integrate_fixed_shifted<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    grid: &TimeGrid,
    method: Method,
    shifts: Option<&[f64]>,
) -> Result<Trajectory> {
    if let Some(sh) = shifts {
        if sh.len() != grid.steps() {
            return Err(Error::InvalidInput(format!(
                "need one time shift per step: {} shifts for {} steps",
                sh.len(),
                grid.steps()
            )));
        }
    }
    let times = grid.times();
    let mut nodes = Vec::with_capacity(times.len());
    let mut x = x0.to_vec();
    let mut nfe = 0usize;
    nodes.push((times[0], x.clone()));
    for i in 0..grid.steps() {
        let s = times[i];
        let h = times[i + 1] - s;
        let shift = shifts.map_or(0.0, |sh| sh[i]);
        match method {
            Method::Rk1 => {
                let k1 = field.eval(&x, (s + shift).clamp(0.0, 1.0))?;
                nfe += 1;
                for (xi, ki) in x.iter_mut().zip(&k1) {
                    *xi += h * ki;
                }
            }
            Method::Rk2 => {
                let k1 = field.eval(&x, (s + shift).clamp(0.0, 1.0))?;
                let mid: Vec<f64> = x
                    .iter()
                    .zip(&k1)
                    .map(|(xi, ki)| xi + 0.5 * h * ki)
                    .collect();
                let k2 = field.eval(&mid, (s + 0.5 * h + shift).clamp(0.0, 1.0))?;
                nfe += 2;
                for (xi, ki) in x.iter_mut().zip(&k2) {
                    *xi += h * ki;
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("integration state"));
        }
        nodes.push((times[i + 1], x.clone()));
    }
    Ok(Trajectory { nodes, nfe })
}

/// Few-step solve along the target path: composes the path transform with
/// [`integrate_fixed`] on target-path times.
pub fn solve_student<F: VectorField>(
    ctx: &TransformContext,
    field: &F,
    x0: &[f64],
    grid: &TimeGrid,
    method: Method,
) -> Result<Trajectory> {
    integrate_fixed(&ctx.transformed_field(field), x0, grid, method)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// b - bhat: weights of the embedded error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4) solve of `x' = f(x, s)` from `s0` to `s1`.
/// Returns the endpoint and the raw count of field evaluations.
///
/// Step-size control is the usual PI stabilized controller (safety 0.9,
/// growth clamped to [0.1, 5], beta 0.04). A step below 1e-12 aborts with a
/// stiffness error.
pub fn integrate_adaptive<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    s0: f64,
    s1: f64,
    rtol: f64,
    atol: f64,
) -> Result<(Vec<f64>, usize)> {
    if !s0.is_finite() || !s1.is_finite() || s0 >= s1 {
        return Err(Error::InvalidInput(format!(
            "need s0 < s1, got [{s0}, {s1}]"
        )));
    }
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut s = s0;
    let mut nfe = 0usize;

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    k[0] = field.eval(&x, s)?;
    nfe += 1;

    // initial step from the scale of f at the start
    let sc_norm = |v: &[f64], y: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (vi, yi) in v.iter().zip(y) {
            let sc = atol + rtol * yi.abs();
            acc += (vi / sc) * (vi / sc);
        }
        (acc / dim as f64).sqrt()
    };
    let d0 = sc_norm(&x, &x);
    let d1 = sc_norm(&k[0], &x);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(s1 - s0);

    const SAFETY: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN: f64 = 0.2; // max shrink 5x
    const FAC_MAX: f64 = 10.0; // max growth 10x
    let mut facold = 1e-4f64;

    for _ in 0..MAX_STEPS {
        let mut last = false;
        if s + h >= s1 {
            h = s1 - s;
            last = true;
        }
        if h < MIN_STEP {
            return Err(Error::Stiff { s, step: h });
        }

        for stage in 1..7 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = A[stage - 1][j];
                if a != 0.0 {
                    for (xi, ki) in xs.iter_mut().zip(kj) {
                        *xi += h * a * ki;
                    }
                }
            }
            k[stage] = field.eval(&xs, s + C[stage] * h)?;
            nfe += 1;
        }
        // the 7th stage already lands on the 5th-order solution (FSAL)
        let mut x_new = x.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let a = A[5][j];
            if a != 0.0 {
                for (xi, ki) in x_new.iter_mut().zip(kj) {
                    *xi += h * a * ki;
                }
            }
        }

        let mut err_acc = 0.0;
        for d in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[d];
            }
            let sc = atol + rtol * x[d].abs().max(x_new[d].abs());
            let r = h * e / sc;
            err_acc += r * r;
        }
        let err = (err_acc / dim as f64).sqrt();

        if err <= 1.0 {
            s += h;
            x = x_new;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("integration state"));
            }
            k.swap(0, 6); // FSAL: k7 was f(s + h, x_new)
            if last || s >= s1 {
                return Ok((x, nfe));
            }
            let fac11 = err.powf(EXPO);
            let fac = (fac11 / facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = err.max(1e-4);
            h /= fac;
        } else {
            let fac11 = err.powf(EXPO);
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    Err(Error::Stiff { s, step: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::gmm::{GmmSpec, GmmVelocityField};
    use crate::scheduler::{make_grid, GridKind, Scheduler};

    fn exp_field(x: &[f64], _s: f64) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }

    #[test]
    fn rk1_single_step_doubles_exponential_state() {
        let grid = TimeGrid::from_times(vec![0.0, 1.0]).unwrap();
        let traj = integrate_fixed(&exp_field, &[1.5, -2.0], &grid, Method::Rk1).unwrap();
        assert_eq!(traj.endpoint(), &[3.0, -4.0]);
        assert_eq!(traj.nfe(), 1);
    }

    #[test]
    fn constant_field_is_integrated_exactly() {
        let field = |x: &[f64], _s: f64| -> Result<Vec<f64>> { Ok(vec![0.25; x.len()]) };
        let grid = make_grid(GridKind::UniformTime, 7, &Scheduler::linear()).unwrap();
        for method in [Method::Rk1, Method::Rk2] {
            let traj = integrate_fixed(&field, &[1.0], &grid, method).unwrap();
            assert!((traj.endpoint()[0] - 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rk2_two_step_hand_value() {
        // midpoint steps of x' = x over [0, 0.5, 1]:
        // growth per step (1 + h + h^2/2) with h = 0.5
        let grid = TimeGrid::from_times(vec![0.0, 0.5, 1.0]).unwrap();
        let traj = integrate_fixed(&exp_field, &[1.0], &grid, Method::Rk2).unwrap();
        let per_step = 1.0 + 0.5 + 0.125;
        assert!((traj.endpoint()[0] - per_step * per_step).abs() < 1e-14);
        assert_eq!(traj.nfe(), 4);
    }

    #[test]
    fn nfe_bookkeeping() {
        let grid = make_grid(GridKind::UniformTime, 5, &Scheduler::linear()).unwrap();
        let t1 = integrate_fixed(&exp_field, &[1.0], &grid, Method::Rk1).unwrap();
        assert_eq!(t1.nfe(), 5);
        let t2 = integrate_fixed(&exp_field, &[1.0], &grid, Method::Rk2).unwrap();
        assert_eq!(t2.nfe(), 10);
        assert_eq!(Method::Rk2.steps_for_nfe(10).unwrap(), 5);
        assert!(Method::Rk2.steps_for_nfe(7).is_err());
    }

    #[test]
    fn convergence_orders_on_exponential() {
        let truth = std::f64::consts::E;
        let mut rk1_errs = Vec::new();
        let mut rk2_errs = Vec::new();
        for m in [64usize, 128, 256, 512] {
            let grid = make_grid(GridKind::UniformTime, m, &Scheduler::linear()).unwrap();
            let e1 = (integrate_fixed(&exp_field, &[1.0], &grid, Method::Rk1)
                .unwrap()
                .endpoint()[0]
                - truth)
                .abs();
            let e2 = (integrate_fixed(&exp_field, &[1.0], &grid, Method::Rk2)
                .unwrap()
                .endpoint()[0]
                - truth)
                .abs();
            rk1_errs.push(e1);
            rk2_errs.push(e2);
        }
        for w in rk1_errs.windows(2) {
            let factor = w[0] / w[1];
            assert!((1.8..=2.2).contains(&factor), "rk1 factor {factor}");
        }
        for w in rk2_errs.windows(2) {
            let factor = w[0] / w[1];
            assert!((3.6..=4.4).contains(&factor), "rk2 factor {factor}");
        }
    }

    #[test]
    fn adaptive_matches_exponential() {
        let rtol = 1e-8;
        let (end, nfe) = integrate_adaptive(&exp_field, &[1.0], 0.0, 1.0, rtol, 1e-10).unwrap();
        assert!((end[0] - std::f64::consts::E).abs() < 1e-7);
        assert!((end[0] - std::f64::consts::E).abs() < 10.0 * rtol * std::f64::consts::E);
        assert!(nfe > 6);
    }

    #[test]
    fn adaptive_zero_field_exact() {
        let zero = |x: &[f64], _s: f64| -> Result<Vec<f64>> { Ok(vec![0.0; x.len()]) };
        let (end, _) = integrate_adaptive(&zero, &[2.5, -1.0], 0.0, 1.0, 1e-6, 1e-8).unwrap();
        assert_eq!(end, vec![2.5, -1.0]);
    }

    #[test]
    fn adaptive_single_gaussian_flow_map() {
        // K = 1: the probability flow is affine, x0 -> mu + std * x0 at s = 1.
        let mu = [2.0, -1.0];
        let std = 0.6;
        let gmm = GmmSpec::new(vec![1.0], vec![mu.to_vec()], vec![std * std]).unwrap();
        let field = GmmVelocityField::new(gmm, Scheduler::linear());
        for x0 in [[0.3, 0.8], [-1.2, 0.1], [2.0, -2.0]] {
            let (end, _) = integrate_adaptive(&field, &x0, 0.0, 1.0, 1e-8, 1e-10).unwrap();
            for d in 0..2 {
                let expected = mu[d] + std * x0[d];
                assert!((end[d] - expected).abs() < 1e-4, "{end:?}");
            }
        }
    }

    #[test]
    fn student_solve_reduces_to_plain_integration_for_identity_transform() {
        let ctx = TransformContext::new(Scheduler::linear(), Scheduler::linear());
        let gmm = GmmSpec::benchmark_circle8();
        let field = GmmVelocityField::new(gmm, Scheduler::linear());
        let grid = make_grid(GridKind::UniformTime, 5, &Scheduler::linear()).unwrap();
        let x0 = [0.4, -0.9];
        let plain = integrate_fixed(&field, &x0, &grid, Method::Rk2).unwrap();
        let student = solve_student(&ctx, &field, &x0, &grid, Method::Rk2).unwrap();
        assert_eq!(student.nfe(), 10);
        for (a, b) in plain.nodes().iter().zip(student.nodes()) {
            for (x, y) in a.1.iter().zip(&b.1) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn determinism_identical_inputs_identical_trajectories() {
        let gmm = GmmSpec::benchmark_circle8();
        let field = GmmVelocityField::new(gmm, Scheduler::linear());
        let grid = make_grid(GridKind::UniformTime, 8, &Scheduler::linear()).unwrap();
        let a = integrate_fixed(&field, &[1.0, 1.0], &grid, Method::Rk2).unwrap();
        let b = integrate_fixed(&field, &[1.0, 1.0], &grid, Method::Rk2).unwrap();
        assert_eq!(a, b);
        let (ea, na) = integrate_adaptive(&field, &[1.0, 1.0], 0.0, 1.0, 1e-7, 1e-9).unwrap();
        let (eb, nb) = integrate_adaptive(&field, &[1.0, 1.0], 0.0, 1.0, 1e-7, 1e-9).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(na, nb);
    }

    #[test]
    fn shifted_integration_moves_evaluation_times_only() {
        // f depends on s alone, so shifting the evaluation time changes the
        // result exactly as if the integrand had been sampled elsewhere,
        // while the step sizes stay those of the true grid
        let field = |_x: &[f64], s: f64| -> Result<Vec<f64>> { Ok(vec![s]) };
        let grid = TimeGrid::from_times(vec![0.0, 0.5, 1.0]).unwrap();
        let plain = integrate_fixed_shifted(&field, &[0.0], &grid, Method::Rk1, None).unwrap();
        let zeros = integrate_fixed_shifted(&field, &[0.0], &grid, Method::Rk1, Some(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(plain, zeros);
        let shifted =
            integrate_fixed_shifted(&field, &[0.0], &grid, Method::Rk1, Some(&[0.1, 0.2]))
                .unwrap();
        // Euler with f(s): endpoint = 0.5*(0 + shift0) + 0.5*(0.5 + shift1)
        assert!((shifted.endpoint()[0] - (0.5 * 0.1 + 0.5 * 0.7)).abs() < 1e-15);
        // shifts clamp into [0, 1]
        let clamped =
            integrate_fixed_shifted(&field, &[0.0], &grid, Method::Rk1, Some(&[-1.0, 9.0]))
                .unwrap();
        assert!((clamped.endpoint()[0] - (0.5 * 0.0 + 0.5 * 1.0)).abs() < 1e-15);
        // one shift per step is required
        assert!(
            integrate_fixed_shifted(&field, &[0.0], &grid, Method::Rk1, Some(&[0.1])).is_err()
        );
    }

    #[test]
    fn adaptive_reports_stiffness_on_step_underflow() {
        // a field oscillating far below any resolvable step keeps the local
        // error estimate above tolerance until the step underflows
        let noisy = |_x: &[f64], s: f64| -> Result<Vec<f64>> { Ok(vec![1e6 * (1e14 * s).sin()]) };
        let err = integrate_adaptive(&noisy, &[0.0], 0.0, 1.0, 1e-10, 1e-12).unwrap_err();
        assert!(matches!(err, crate::error::Error::Stiff { .. }), "{err:?}");
    }

    #[test]
    fn field_failure_aborts() {
        let bad = |_x: &[f64], s: f64| -> Result<Vec<f64>> {
            if s > 0.5 {
                Err(crate::error::Error::NonFinite("test field"))
            } else {
                Ok(vec![1.0])
            }
        };
        let grid = make_grid(GridKind::UniformTime, 4, &Scheduler::linear()).unwrap();
        assert!(integrate_fixed(&bad, &[0.0], &grid, Method::Rk1).is_err());
    }

    #[test]
    fn csv_export_shape() {
        let grid = TimeGrid::from_times(vec![0.0, 0.5, 1.0]).unwrap();
        let traj = integrate_fixed(&exp_field, &[1.0, 2.0], &grid, Method::Rk1).unwrap();
        let csv = traj.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# nfe=2");
        assert_eq!(lines.next().unwrap(), "time,x0,x1");
        assert_eq!(lines.count(), 3);
    }
}
