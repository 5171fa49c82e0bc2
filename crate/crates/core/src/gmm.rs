//! Exact velocity field for a standard-normal source and Gaussian-mixture
//! target.
//!
//! With `x_s = alpha(s) x1 + sigma(s) x0`, `x1` from an isotropic mixture and
//! `x0 ~ N(0, I)`, the marginal at `s` is itself a mixture with component
//! covariance `(alpha^2 g_k + sigma^2) I` (writing `g_k` for the component
//! variance), and the conditional expectations defining the probability-flow
//! velocity close in elementary Gaussian algebra:
//!
//! ```text
//! E[x1 | x, k] = mu_k + alpha g_k (x - alpha mu_k) / (alpha^2 g_k + sigma^2)
//! E[x0 | x, k] = sigma (x - alpha mu_k) / (alpha^2 g_k + sigma^2)
//! u(x, s)      = sum_k r_k(x, s) (alpha' E[x1 | x, k] + sigma' E[x0 | x, k])
//! ```
//!
//! The second form carries no division by `sigma`, so the field stays finite
//! through `s = 1`, where it reduces to `alpha'(1) x`. The checked
//! [`GmmVelocityField::velocity`] still rejects `s = 1` per its contract;
//! solvers integrate through the terminal time via the [`VectorField`] impl,
//! which uses the same regular expression everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::scheduler::Scheduler;

/// Gaussian-mixture target: positive weights summing to 1, one mean and one
/// isotropic variance per component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
    dim: usize,
}

impl GmmSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::InvalidInput(
                "weights, means, and variances must have equal nonzero lengths".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidInput(
                "all means must share one nonzero dimension".into(),
            ));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture means"));
        }
        Ok(Self {
            weights,
            means,
            variances,
            dim,
        })
    }

    /// Repo-standard benchmark: eight equal-weight components on a circle of
    /// radius 8 with standard deviation 0.5 per component.
    pub fn benchmark_circle8() -> Self {
        let k = 8;
        let radius = 8.0;
        let std = 0.5;
        let weights = vec![1.0 / k as f64; k];
        let means = (0..k)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                vec![radius * angle.cos(), radius * angle.sin()]
            })
            .collect();
        let variances = vec![std * std; k];
        Self::new(weights, means, variances).expect("benchmark spec is valid")
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Mixture mean `sum_k w_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (o, m) in out.iter_mut().zip(mu) {
                *o += w * m;
            }
        }
        out
    }
}

/// The oracle velocity field induced by a mixture target and a scheduler.
#[derive(Debug, Clone)]
pub struct GmmVelocityField {
    gmm: GmmSpec,
    sched: Scheduler,
}

impl GmmVelocityField {
    pub fn new(gmm: GmmSpec, sched: Scheduler) -> Self {
        Self { gmm, sched }
    }

    pub fn gmm(&self) -> &GmmSpec {
        &self.gmm
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.sched
    }

    /// Posterior component weights at `(x, s)`: `r_k proportional to
    /// w_k N(x; alpha mu_k, (alpha^2 g_k + sigma^2) I)`, log-sum-exp
    /// stabilized. Sums to 1.
    pub fn responsibilities(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self.check_state(x, s)?;
        let e = self.sched.eval(s)?;
        Ok(self.responsibilities_inner(x, e.alpha, e.sigma))
    }

    /// Posterior mean of the target endpoint, `E[x1 | x_s = x]`.
    pub fn posterior_target_mean(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self.check_state(x, s)?;
        let e = self.sched.eval(s)?;
        let r = self.responsibilities_inner(x, e.alpha, e.sigma);
        let mut out = vec![0.0; self.gmm.dim];
        for ((rk, mu_k), var_k) in r.iter().zip(&self.gmm.means).zip(&self.gmm.variances) {
            let v = e.alpha * e.alpha * var_k + e.sigma * e.sigma;
            let gain = e.alpha * var_k / v;
            for ((o, xd), md) in out.iter_mut().zip(x).zip(mu_k) {
                *o += rk * (md + gain * (xd - e.alpha * md));
            }
        }
        Ok(out)
    }

    /// Posterior mean of the source endpoint, `E[x0 | x_s = x]`, in the
    /// sigma-free component form.
    pub fn posterior_source_mean(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self.check_state(x, s)?;
        let e = self.sched.eval(s)?;
        let r = self.responsibilities_inner(x, e.alpha, e.sigma);
        let mut out = vec![0.0; self.gmm.dim];
        for ((rk, mu_k), var_k) in r.iter().zip(&self.gmm.means).zip(&self.gmm.variances) {
            let v = e.alpha * e.alpha * var_k + e.sigma * e.sigma;
            for ((o, xd), md) in out.iter_mut().zip(x).zip(mu_k) {
                *o += rk * e.sigma * (xd - e.alpha * md) / v;
            }
        }
        Ok(out)
    }

    /// Probability-flow velocity `u(x, s) = alpha' E[x1|x] + sigma' E[x0|x]`.
    /// Rejects `s = 1`, where the conditional decomposition degenerates;
    /// integrators use the [`VectorField`] impl that carries the regular form
    /// through the terminal time.
    pub fn velocity(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        if s == 1.0 {
            return Err(Error::OutOfDomain { what: "s", value: s });
        }
        self.velocity_regular(x, s)
    }

    fn velocity_regular(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self.check_state(x, s)?;
        let e = self.sched.eval(s)?;
        let r = self.responsibilities_inner(x, e.alpha, e.sigma);
        let mut out = vec![0.0; self.gmm.dim];
        for ((rk, mu_k), var_k) in r.iter().zip(&self.gmm.means).zip(&self.gmm.variances) {
            let v = e.alpha * e.alpha * var_k + e.sigma * e.sigma;
            let target_gain = e.alpha * var_k / v;
            for ((o, xd), md) in out.iter_mut().zip(x).zip(mu_k) {
                let centered = xd - e.alpha * md;
                let target_mean = md + target_gain * centered;
                let source_mean = e.sigma * centered / v;
                *o += rk * (e.d_alpha * target_mean + e.d_sigma * source_mean);
            }
        }
        Ok(out)
    }

    fn responsibilities_inner(&self, x: &[f64], alpha: f64, sigma: f64) -> Vec<f64> {
        let k = self.gmm.components();
        if k == 1 {
            return vec![1.0];
        }
        let mut logs = Vec::with_capacity(k);
        for i in 0..k {
            let v = alpha * alpha * self.gmm.variances[i] + sigma * sigma;
            let mut sq = 0.0;
            for (xd, md) in x.iter().zip(&self.gmm.means[i]) {
                let c = xd - alpha * md;
                sq += c * c;
            }
            logs.push(self.gmm.weights[i].ln() - 0.5 * self.gmm.dim as f64 * v.ln() - 0.5 * sq / v);
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        weights
    }

    fn check_state(&self, x: &[f64], s: f64) -> Result<()> {
        crate::bezier::check_unit_interval("s", s)?;
        if x.len() != self.gmm.dim {
            return Err(Error::InvalidInput(format!(
                "state dimension {} does not match mixture dimension {}",
                x.len(),
                self.gmm.dim
            )));
        }
        Ok(())
    }
}

impl VectorField for GmmVelocityField {
    fn eval(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self.velocity_regular(x, s)
    }
}

/// Draws `count` samples from the mixture. Deterministic per seed.
pub fn sample_target(gmm: &GmmSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("unit range");
    let normal = StandardNormal;
    (0..count)
        .map(|_| {
            let mut u = unit.sample(&mut rng);
            let mut k = 0;
            for (i, w) in gmm.weights().iter().enumerate() {
                k = i;
                if u < *w {
                    break;
                }
                u -= w;
            }
            let std = gmm.variances()[k].sqrt();
            gmm.means()[k]
                .iter()
                .map(|m| {
                    let z: f64 = normal.sample(&mut rng);
                    m + std * z
                })
                .collect()
        })
        .collect()
}

/// Draws `count` standard-normal states of the given dimension.
pub fn sample_source(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = normal.sample(&mut rng);
                    z
                })
                .collect()
        })
        .collect()
}
