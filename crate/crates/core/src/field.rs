//! Velocity-field abstraction shared by the solvers and the path transform.

use crate::error::Result;

/// A time-dependent vector field `u(x, s)` on `R^D x [0, 1]`.
pub trait VectorField {
    fn eval(&self, x: &[f64], s: f64) -> Result<Vec<f64>>;
}

impl<F> VectorField for F
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    fn eval(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        self(x, s)
    }
}
