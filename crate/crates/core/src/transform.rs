//! Path reparameterization between two schedulers.
//!
//! A source-path state `x_t` and a target-path state `x̄_s` are related by
//! `x̄_s = c_s x_{t_s}`, where the time map `t_s` matches SNR levels and the
//! scale `c_s` matches coefficients:
//!
//! ```text
//! t_s = rho^-1(rho_target(s)),      c_s = sigma_target(s) / sigma(t_s)
//!                                       = alpha_target(s) / alpha(t_s),
//! ```
//!
//! with `c_s = 1` at both endpoints. Re-expressing a velocity field along the
//! target path gives
//!
//! ```text
//! u_target(x, s) = (d/ds log c_s) x + c_s (dt_s/ds) u(x / c_s, t_s),
//! ```
//!
//! which leaves the endpoint states (and hence the endpoint marginals)
//! unchanged.

use log::warn;

use crate::bezier::check_unit_interval;
use crate::error::Result;
use crate::field::VectorField;
use crate::scheduler::Scheduler;

/// Scale threshold below which the transform logs a warning; no scheduler
/// pair in this crate gets near it, but a degenerate target could.
const SCALE_WARN: f64 = 1e-6;

/// Width of the endpoint bands on which the analytic one-sided limits
/// replace the interior formulas. Inside the band the interior expressions
/// lose all relative precision (they form an O((1-s)^2) quantity from
/// inputs known only to absolute rounding, since sigma(t) = O(1-t) inherits
/// the ulp of t ~ 1), while the frozen limits commit a smooth O(1e-5)
/// coefficient error whose effect on an integrated endpoint is O(1e-9).
const ENDPOINT_BAND: f64 = 1e-5;

/// A source scheduler paired with a target scheduler, exposing the
/// reparameterization quantities between their paths.
#[derive(Debug, Clone)]
pub struct TransformContext {
    source: Scheduler,
    target: Scheduler,
}

/// Transform quantities at one target time, computed in a single pass.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    t: f64,
    scale: f64,
    scale_log_deriv: f64,
    time_deriv: f64,
}

impl TransformContext {
    pub fn new(source: Scheduler, target: Scheduler) -> Self {
        Self { source, target }
    }

    pub fn source(&self) -> &Scheduler {
        &self.source
    }

    pub fn target(&self) -> &Scheduler {
        &self.target
    }

    /// Source time at target time `s`: `t_s = rho^-1(rho_target(s))`.
    /// Strictly increasing with `t(0) = 0` and `t(1) = 1`.
    pub fn time_map(&self, s: f64) -> Result<f64> {
        check_unit_interval("s", s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        if s == 1.0 {
            return Ok(1.0);
        }
        self.source.invert_snr(self.target.snr_ratio(s)?)
    }

    /// Scale `c_s`, equal to 1 at both endpoints and positive throughout.
    pub fn scale(&self, s: f64) -> Result<f64> {
        Ok(self.coefficients(s)?.scale)
    }

    /// `dt_s/ds = rho_target'(s) / rho'(t_s)`, positive on `[0, 1]`.
    pub fn time_map_derivative(&self, s: f64) -> Result<f64> {
        Ok(self.coefficients(s)?.time_deriv)
    }

    /// `d/ds log c_s`, evaluated through the chain rule (never by
    /// differencing `time_map`, whose inversion tolerance would dominate).
    pub fn scale_log_derivative(&self, s: f64) -> Result<f64> {
        Ok(self.coefficients(s)?.scale_log_deriv)
    }

    /// Velocity along the target path given the source-path field.
    pub fn transformed_velocity<F: VectorField + ?Sized>(
        &self,
        field: &F,
        s: f64,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        let co = self.coefficients(s)?;
        if co.scale < SCALE_WARN {
            warn!("path transform scale c_s = {:.3e} at s = {s}; source field sees a large state", co.scale);
        }
        let inner: Vec<f64> = x.iter().map(|v| v / co.scale).collect();
        let u = field.eval(&inner, co.t)?;
        let gain = co.scale * co.time_deriv;
        Ok(x.iter()
            .zip(&u)
            .map(|(xi, ui)| co.scale_log_deriv * xi + gain * ui)
            .collect())
    }

    /// Wraps a source-path field as a target-path [`VectorField`].
    pub fn transformed_field<'a, F: VectorField>(&'a self, field: &'a F) -> TransformedField<'a, F> {
        TransformedField { ctx: self, field }
    }

    fn coefficients(&self, s: f64) -> Result<Coefficients> {
        check_unit_interval("s", s)?;
        let tgt = self.target.eval(s)?;
        // Endpoint bands: c = 1 by definition at the exact ends; the
        // derivative terms are the one-sided limits of the interior
        // formulas, which close in the endpoint coefficient derivatives
        // alone.
        if s <= ENDPOINT_BAND {
            let tgt0 = self.target.eval(0.0)?;
            let src = self.source.eval(0.0)?;
            let time_deriv = tgt0.d_alpha / src.d_alpha;
            return Ok(Coefficients {
                t: 0.0,
                scale: 1.0,
                scale_log_deriv: tgt0.d_sigma - src.d_sigma * time_deriv,
                time_deriv,
            });
        }
        if s >= 1.0 - ENDPOINT_BAND {
            let tgt1 = self.target.eval(1.0)?;
            let src = self.source.eval(1.0)?;
            let time_deriv = tgt1.d_sigma / src.d_sigma;
            return Ok(Coefficients {
                t: 1.0,
                scale: 1.0,
                scale_log_deriv: tgt1.d_alpha - src.d_alpha * time_deriv,
                time_deriv,
            });
        }

        let t = self.source.invert_snr(tgt.alpha / tgt.sigma)?;
        let src = self.source.eval(t)?;
        // the quotient forms agree wherever rho matches; pick the one whose
        // denominator sits away from its 0/0 endpoint
        let scale = if s <= 0.5 {
            tgt.sigma / src.sigma
        } else {
            tgt.alpha / src.alpha
        };

        // dt/ds = (rho_target' / rho') = (N_target / N) / c^2 with
        // N = alpha' sigma - alpha sigma'; the sigma^2 factors fold into c
        // and stay finite at both ends.
        let n_tgt = tgt.d_alpha * tgt.sigma - tgt.alpha * tgt.d_sigma;
        let n_src = src.d_alpha * src.sigma - src.alpha * src.d_sigma;
        let time_deriv = n_tgt / (n_src * scale * scale);

        // d/ds log c = sigma_target'/sigma_target - (sigma'/sigma) dt/ds,
        // combined over a common denominator so the two 1/sigma poles cancel
        // algebraically instead of numerically.
        let num = src.sigma * tgt.sigma * (src.d_alpha * tgt.d_sigma - tgt.d_alpha * src.d_sigma)
            + src.d_sigma * tgt.d_sigma * (src.sigma * tgt.alpha - tgt.sigma * src.alpha);
        let scale_log_deriv = num / (tgt.sigma * tgt.sigma * n_src);

        Ok(Coefficients {
            t,
            scale,
            scale_log_deriv,
            time_deriv,
        })
    }
}

pub struct TransformedField<'a, F> {
    ctx: &'a TransformContext,
    field: &'a F,
}

impl<F: VectorField> VectorField for TransformedField<'_, F> {
    fn eval(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self.ctx.transformed_velocity(self.field, s, x)
    }
}
