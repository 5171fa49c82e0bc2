//! Interpolation schedulers: the coefficient pair `(alpha, sigma)` that fixes
//! the geometry of a sampling path, with derivatives, the SNR ratio and its
//! numerical inverse, and timestep-grid construction.
//!
//! Every scheduler satisfies the boundary conditions `alpha(0) = 0`,
//! `alpha(1) = 1`, `sigma(0) = 1`, `sigma(1) = 0` exactly, and has
//! `rho(s) = alpha(s) / sigma(s)` strictly increasing on `[0, 1)`.

use serde::{Deserialize, Serialize};

use crate::bezier::{
    check_unit_interval, de_casteljau, de_casteljau_derivative, descending_points_from_logits,
    monotone_points_from_logits, ControlVector, LogitVector,
};
use crate::error::{Error, Result};

/// Default Bézier degree (number of logits per coefficient curve).
pub const DEFAULT_DEGREE: usize = 32;

/// Clamp used when equispacing a grid in log-SNR, where the ratio hits 0 and
/// infinity at the exact endpoints.
const SNR_GRID_CLAMP: f64 = 1e-3;

/// Coefficient values and time derivatives at one point of the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerEval {
    pub alpha: f64,
    pub sigma: f64,
    pub d_alpha: f64,
    pub d_sigma: f64,
}

/// A Bézier-parameterized scheduler: `alpha` is a monotone Bézier curve and
/// `sigma` its descending counterpart, both driven by logits through the
/// cumulative softmax so that monotonicity and the boundary conditions hold
/// by construction.
#[derive(Debug, Clone)]
pub struct BezierScheduler {
    logits_alpha: LogitVector,
    logits_sigma: LogitVector,
    alpha_points: ControlVector,
    sigma_points: ControlVector,
    // 1 - C^sigma computed as suffix sums, so sigma(s) evaluates without
    // cancellation as s -> 1.
    sigma_descending: Vec<f64>,
}

impl BezierScheduler {
    pub fn new(logits_alpha: LogitVector, logits_sigma: LogitVector) -> Result<Self> {
        if logits_alpha.len() != logits_sigma.len() {
            return Err(Error::InvalidInput(format!(
                "alpha and sigma logits must share one degree, got {} and {}",
                logits_alpha.len(),
                logits_sigma.len()
            )));
        }
        let alpha_points = monotone_points_from_logits(&logits_alpha);
        let sigma_points = monotone_points_from_logits(&logits_sigma);
        let sigma_descending = descending_points_from_logits(&logits_sigma);
        Ok(Self {
            logits_alpha,
            logits_sigma,
            alpha_points,
            sigma_points,
            sigma_descending,
        })
    }

    pub fn degree(&self) -> usize {
        self.logits_alpha.len()
    }

    pub fn logits_alpha(&self) -> &LogitVector {
        &self.logits_alpha
    }

    pub fn logits_sigma(&self) -> &LogitVector {
        &self.logits_sigma
    }

    /// Control points of the ascending alpha curve.
    pub fn alpha_control_points(&self) -> &ControlVector {
        &self.alpha_points
    }

    /// Control points of the ascending curve whose complement is sigma.
    pub fn sigma_control_points(&self) -> &ControlVector {
        &self.sigma_points
    }
}

/// A scheduler realization. Immutable after construction; every method is
/// pure, so handles can be shared freely across workers.
#[derive(Debug, Clone)]
pub enum Scheduler {
    /// `alpha(s) = s`, `sigma(s) = 1 - s`.
    Linear,
    /// Variance preserving: `alpha(s) = sin(pi s / 2)`, `sigma(s) = cos(pi s / 2)`.
    Vp,
    Bezier(BezierScheduler),
}

impl Scheduler {
    pub fn linear() -> Self {
        Scheduler::Linear
    }

    pub fn vp() -> Self {
        Scheduler::Vp
    }

    pub fn bezier(logits_alpha: LogitVector, logits_sigma: LogitVector) -> Result<Self> {
        Ok(Scheduler::Bezier(BezierScheduler::new(
            logits_alpha,
            logits_sigma,
        )?))
    }

    /// Bézier scheduler at the linear initialization (all-ones logits).
    pub fn bezier_linear_init(degree: usize) -> Result<Self> {
        Self::bezier(
            LogitVector::linear_init(degree)?,
            LogitVector::linear_init(degree)?,
        )
    }

    /// Builds a Bézier scheduler from raw control points without monotonicity
    /// validation. Fault-injection hook for the verification suite.
    #[doc(hidden)]
    pub fn bezier_unchecked(alpha_points: Vec<f64>, sigma_points: Vec<f64>) -> Self {
        let n = alpha_points.len() - 1;
        let sigma_descending = sigma_points.iter().map(|p| 1.0 - p).collect();
        Scheduler::Bezier(BezierScheduler {
            logits_alpha: LogitVector::new(vec![0.0; n]).unwrap(),
            logits_sigma: LogitVector::new(vec![0.0; n]).unwrap(),
            alpha_points: ControlVector::new_unchecked(alpha_points),
            sigma_points: ControlVector::new_unchecked(sigma_points),
            sigma_descending,
        })
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Scheduler::Linear => "linear",
            Scheduler::Vp => "vp",
            Scheduler::Bezier(_) => "bezier",
        }
    }

    /// Coefficients and derivatives at `s`. Boundary values are exact:
    /// `(0, 1, ., .)` at `s = 0` and `(1, 0, ., .)` at `s = 1`.
    pub fn eval(&self, s: f64) -> Result<SchedulerEval> {
        check_unit_interval("s", s)?;
        let mut out = match self {
            Scheduler::Linear => SchedulerEval {
                alpha: s,
                sigma: 1.0 - s,
                d_alpha: 1.0,
                d_sigma: -1.0,
            },
            Scheduler::Vp => {
                let half_pi = std::f64::consts::FRAC_PI_2;
                let (sin, cos) = (half_pi * s).sin_cos();
                SchedulerEval {
                    alpha: sin,
                    sigma: cos,
                    d_alpha: half_pi * cos,
                    d_sigma: -half_pi * sin,
                }
            }
            Scheduler::Bezier(b) => SchedulerEval {
                alpha: de_casteljau(b.alpha_points.points(), s),
                sigma: de_casteljau(&b.sigma_descending, s),
                d_alpha: de_casteljau_derivative(b.alpha_points.points(), s),
                d_sigma: de_casteljau_derivative(&b.sigma_descending, s),
            },
        };
        // Pin boundary values exactly (vp's cos(pi/2) rounds to ~6e-17).
        if s == 0.0 {
            out.alpha = 0.0;
            out.sigma = 1.0;
        } else if s == 1.0 {
            out.alpha = 1.0;
            out.sigma = 0.0;
        }
        Ok(out)
    }

    /// Signal-to-noise ratio `rho(s) = alpha(s) / sigma(s)`, strictly
    /// increasing on `[0, 1)`. Diverges at `s = 1`.
    pub fn snr_ratio(&self, s: f64) -> Result<f64> {
        if s == 1.0 {
            return Err(Error::SnrInfinite);
        }
        let e = self.eval(s)?;
        Ok(e.alpha / e.sigma)
    }

    /// `rho'(s) = (alpha' sigma - alpha sigma') / sigma^2`.
    pub fn snr_derivative(&self, s: f64) -> Result<f64> {
        if s == 1.0 {
            return Err(Error::SnrInfinite);
        }
        let e = self.eval(s)?;
        Ok((e.d_alpha * e.sigma - e.alpha * e.d_sigma) / (e.sigma * e.sigma))
    }

    /// Inverse of the SNR ratio: the `s` in `[0, 1)` with `rho(s) = y`.
    ///
    /// Monotonicity makes the root unique; an expanding bracket plus
    /// bisection to a 1e-12 interval pins it down, and two Newton polish
    /// steps with the closed-form derivative restore full precision.
    pub fn invert_snr(&self, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::SnrOutOfRange { y });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0f64;
        let mut hi = 0.5f64;
        while self.snr_ratio(hi)? < y {
            lo = hi;
            let gap = 1.0 - hi;
            hi = 1.0 - gap / 2.0;
            if gap < 1e-14 {
                // y exceeds any representable rho(s) short of the pole
                return Ok(hi);
            }
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.snr_ratio(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..2 {
            let f = self.snr_ratio(s)? - y;
            let df = self.snr_derivative(s)?;
            if df > 0.0 {
                let next = s - f / df;
                if next.is_finite() && (0.0..1.0).contains(&next) {
                    s = next;
                }
            }
        }
        Ok(s)
    }
}

/// Spacing rule for a timestep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    UniformTime,
    /// Equispaced in log-SNR over the clamped range `[rho(1e-3), rho(1 - 1e-3)]`,
    /// with the end points pinned to exact 0 and 1.
    UniformSnr,
    /// Caller-supplied times (used when solving along explicit timestep sets).
    Explicit,
}

/// Ordered solver times `0 = s_0 < ... < s_M = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    kind: GridKind,
}

impl TimeGrid {
    /// Wraps explicit times, validating strict increase and exact endpoints.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput("grid needs at least one step".into()));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput(
                "grid must start at exactly 0 and end at exactly 1".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("grid times must strictly increase".into()));
        }
        Ok(Self {
            times,
            kind: GridKind::Explicit,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of integration steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }
}

/// Builds an `M + 1`-point grid over `[0, 1]` under the given spacing rule.
pub fn make_grid(kind: GridKind, steps: usize, sched: &Scheduler) -> Result<TimeGrid> {
    if steps == 0 {
        return Err(Error::InvalidInput("grid step count must be >= 1".into()));
    }
    let m = steps as f64;
    let times = match kind {
        GridKind::UniformTime => {
            let mut t: Vec<f64> = (0..=steps).map(|i| i as f64 / m).collect();
            t[0] = 0.0;
            t[steps] = 1.0;
            t
        }
        GridKind::UniformSnr => {
            let l0 = sched.snr_ratio(SNR_GRID_CLAMP)?.ln();
            let l1 = sched.snr_ratio(1.0 - SNR_GRID_CLAMP)?.ln();
            let mut t = Vec::with_capacity(steps + 1);
            t.push(0.0);
            for i in 1..steps {
                let y = (l0 + (i as f64 / m) * (l1 - l0)).exp();
                t.push(sched.invert_snr(y)?);
            }
            t.push(1.0);
            t
        }
        GridKind::Explicit => {
            return Err(Error::InvalidInput(
                "explicit grids are built with TimeGrid::from_times".into(),
            ))
        }
    };
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "grid construction produced non-increasing times".into(),
        ));
    }
    Ok(TimeGrid { times, kind })
}

/// On-disk scheduler document. Field names are a persistence contract.
#[derive(Debug, Serialize, Deserialize)]
struct SchedulerFile {
    kind: String,
    logits_alpha: Vec<f64>,
    logits_sigma: Vec<f64>,
    degree: usize,
}

impl Scheduler {
    pub fn to_json_string(&self) -> String {
        let file = match self {
            Scheduler::Linear | Scheduler::Vp => SchedulerFile {
                kind: self.kind_str().into(),
                logits_alpha: vec![],
                logits_sigma: vec![],
                degree: 0,
            },
            Scheduler::Bezier(b) => SchedulerFile {
                kind: "bezier".into(),
                logits_alpha: b.logits_alpha.as_slice().to_vec(),
                logits_sigma: b.logits_sigma.as_slice().to_vec(),
                degree: b.degree(),
            },
        };
        serde_json::to_string_pretty(&file).expect("scheduler document serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SchedulerFile =
            serde_json::from_str(text).map_err(|e| Error::Persistence(e.to_string()))?;
        match file.kind.as_str() {
            "linear" => Ok(Scheduler::Linear),
            "vp" => Ok(Scheduler::Vp),
            "bezier" => {
                if file.logits_alpha.len() != file.degree || file.logits_sigma.len() != file.degree
                {
                    return Err(Error::Persistence(format!(
                        "degree field {} does not match logit lengths {} / {}",
                        file.degree,
                        file.logits_alpha.len(),
                        file.logits_sigma.len()
                    )));
                }
                let la = LogitVector::new(file.logits_alpha)
                    .map_err(|e| Error::Persistence(e.to_string()))?;
                let ls = LogitVector::new(file.logits_sigma)
                    .map_err(|e| Error::Persistence(e.to_string()))?;
                Scheduler::bezier(la, ls)
            }
            other => Err(Error::Persistence(format!("unknown scheduler kind {other:?}"))),
        }
    }
}
