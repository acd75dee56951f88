//! Central finite differences and the error metric used to compare them
//! against analytic derivatives.

use crate::error::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`: relative for
/// large values, absolute near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Gradient of a scalar function by central differences.
pub fn central_gradient<F>(x: &[f64], step: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Jacobian of a vector function, `out[i][j] = d f_i / d x_j`.
pub fn central_jacobian<F>(x: &[f64], step: f64, mut f: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + step;
        let up = f(&probe)?;
        probe[j] = x[j] - step;
        let down = f(&probe)?;
        probe[j] = x[j];
        columns.push(
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * step))
                .collect::<Vec<_>>(),
        );
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok((0..rows)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect())
}
