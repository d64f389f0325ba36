//! Central finite-difference gradient checks.

use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// `max_i |a_i − n_i| / max(|a_i|, |n_i|, floor)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Component attaining `max_relative_error`.
    pub worst_index: usize,
}

/// Relative errors are measured against `max(|analytic|, |numeric|)`, but
/// never against less than this; below it a component is judged on its
/// absolute error scaled by the floor.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Central-difference gradient of `f` at `point` with step `h`.
pub fn central_difference<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let plus = f(&x)?;
        x[i] = point[i] - h;
        let minus = f(&x)?;
        x[i] = point[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Compares the analytic gradient returned by `f` at `params` against
/// central differences of its value.
pub fn grad_check<F>(f: F, params: &[f64], h: f64) -> Result<GradCheck>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step {h} must be > 0")));
    }
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(Error::Shape {
            op: "grad_check",
            lhs: (analytic.len(), 1),
            rhs: (params.len(), 1),
        });
    }
    let numeric = central_difference(|p| f(p).map(|(v, _)| v), params, h)?;

    let mut out = GradCheck {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_index: 0,
    };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(RELATIVE_FLOOR);
        out.max_absolute_error = out.max_absolute_error.max(abs);
        if rel > out.max_relative_error {
            out.max_relative_error = rel;
            out.worst_index = i;
        }
    }
    Ok(out)
}
