//! Bernstein-basis evaluation, 1D Bézier curves, and the monotone
//! cumulative-softmax control-point chart.
//!
//! Curves are evaluated with de Casteljau recursion, which stays stable at
//! the degrees used here (up to a few dozen control points) where raw
//! binomial sums start losing digits.

use crate::error::{Error, Result};

/// Ordered Bézier control points in `[0, 1]` with the end points pinned to
/// exactly 0 and 1 and a nondecreasing interior.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    points: Vec<f64>,
}

impl ControlVector {
    /// Validates and wraps a raw point list (`n + 1` entries for degree `n`).
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(
                "control vector needs at least two points (degree >= 1)".into(),
            ));
        }
        if !points.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("control points"));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "first control point must be exactly 0, got {}",
                points[0]
            )));
        }
        if *points.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput(format!(
                "last control point must be exactly 1, got {}",
                points.last().unwrap()
            )));
        }
        if points.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(
                "control points must be nondecreasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Uniform points `i / n`, the identity curve.
    pub fn uniform(degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidInput("degree must be >= 1".into()));
        }
        let n = degree as f64;
        let mut points: Vec<f64> = (0..=degree).map(|i| i as f64 / n).collect();
        points[0] = 0.0;
        points[degree] = 1.0;
        Ok(Self { points })
    }

    /// Bypasses validation. Fault-injection hook for the verification suite;
    /// never use for real schedulers.
    #[doc(hidden)]
    pub fn new_unchecked(points: Vec<f64>) -> Self {
        Self { points }
    }

    pub fn degree(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Unconstrained parameters mapped onto interior control points through the
/// cumulative softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    logits: Vec<f64>,
}

impl LogitVector {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidInput("logit vector must be nonempty".into()));
        }
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        Ok(Self { logits })
    }

    /// All-ones logits: interior control points land uniformly, so both
    /// curves reduce to the identity and the scheduler starts out linear.
    pub fn linear_init(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.logits
    }
}

/// Bernstein basis polynomial `b_{i,n}(lambda) = C(n,i) (1-lambda)^(n-i) lambda^i`.
pub fn bernstein(i: usize, n: usize, lambda: f64) -> Result<f64> {
    if i > n {
        return Err(Error::IndexOutOfRange { index: i, degree: n });
    }
    check_unit_interval("lambda", lambda)?;
    Ok(binomial(n, i) * (1.0 - lambda).powi((n - i) as i32) * lambda.powi(i as i32))
}

/// Curve value `B(lambda) = sum_i b_{i,n}(lambda) C_i`, in `[0, 1]` for a
/// valid [`ControlVector`]. Interpolates the pinned end points exactly.
pub fn bezier_eval(c: &ControlVector, lambda: f64) -> Result<f64> {
    check_unit_interval("lambda", lambda)?;
    Ok(de_casteljau(c.points(), lambda))
}

/// Closed-form derivative `n * sum_i b_{i,n-1}(lambda) (C_{i+1} - C_i)`,
/// nonnegative whenever the points are nondecreasing.
pub fn bezier_derivative(c: &ControlVector, lambda: f64) -> Result<f64> {
    check_unit_interval("lambda", lambda)?;
    Ok(de_casteljau_derivative(c.points(), lambda))
}

/// Cumulative-softmax chart: `n` logits produce `n - 1` strictly interior
/// points (partial sums of the softmax), with the end points pinned to 0
/// and 1. A softmax over `n - 1` logits would force its final partial sum
/// to 1, duplicating the pinned end point; spending `n` logits and keeping
/// only the first `n - 1` partial sums guarantees strict interiority.
/// Softmax weights are strictly positive, so the interior is strictly
/// increasing for any finite logits with spread below the exp underflow
/// threshold (~700).
pub fn monotone_points_from_logits(logits: &LogitVector) -> ControlVector {
    let w = softmax(logits.as_slice());
    let n = w.len();
    let mut points = Vec::with_capacity(n + 1);
    points.push(0.0);
    let mut acc = 0.0;
    for weight in w.iter().take(n - 1) {
        acc += weight;
        points.push(acc);
    }
    points.push(1.0);
    ControlVector { points }
}

/// Complement chart used for the sigma coefficient: suffix sums of the same
/// softmax, descending from exactly 1 to exactly 0. Equal to
/// `1 - monotone_points_from_logits(...)` without the cancellation.
pub(crate) fn descending_points_from_logits(logits: &LogitVector) -> Vec<f64> {
    let w = softmax(logits.as_slice());
    let n = w.len();
    let mut points = Vec::with_capacity(n + 1);
    points.push(1.0);
    for i in 1..n {
        points.push(w[i..].iter().sum());
    }
    points.push(0.0);
    points
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// de Casteljau evaluation of a Bézier curve over arbitrary raw points.
pub(crate) fn de_casteljau(points: &[f64], lambda: f64) -> f64 {
    let mut v = points.to_vec();
    for level in (1..v.len()).rev() {
        for j in 0..level {
            v[j] = (1.0 - lambda) * v[j] + lambda * v[j + 1];
        }
    }
    v[0]
}

pub(crate) fn de_casteljau_derivative(points: &[f64], lambda: f64) -> f64 {
    let n = points.len() - 1;
    let diffs: Vec<f64> = points.windows(2).map(|w| w[1] - w[0]).collect();
    n as f64 * de_casteljau(&diffs, lambda)
}

fn binomial(n: usize, i: usize) -> f64 {
    let k = i.min(n - i);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

pub(crate) fn check_unit_interval(what: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfDomain { what, value });
    }
    Ok(())
}
