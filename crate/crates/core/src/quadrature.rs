//! Composite Simpson quadrature on uniform 1-D grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute change allowed between a grid and its doubled refinement.
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// A closed interval split into an even number of equal sub-intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    /// Number of sub-intervals; the node count is `intervals + 1`.
    pub intervals: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, intervals: usize) -> Result<Self> {
        let grid = Self { lo, hi, intervals };
        grid.validate()?;
        Ok(grid)
    }

    /// 4001 nodes on [-12, 12].
    pub fn canonical() -> Self {
        Self {
            lo: -12.0,
            hi: 12.0,
            intervals: 4000,
        }
    }

    /// A grid around `center` spanning `half_width` on each side.
    pub fn around(center: f64, half_width: f64, intervals: usize) -> Self {
        Self {
            lo: center - half_width,
            hi: center + half_width,
            intervals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Invalid(format!(
                "grid bounds must be finite with lo < hi (got [{}, {}])",
                self.lo, self.hi
            )));
        }
        if self.intervals < 2 || self.intervals % 2 != 0 {
            return Err(Error::Invalid(format!(
                "grid needs an even interval count >= 2 (got {})",
                self.intervals
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.intervals as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        // Interpolating from both ends keeps the endpoints exact.
        let t = i as f64 / self.intervals as f64;
        self.lo * (1.0 - t) + self.hi * t
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(move |i| self.node(i))
    }

    pub fn refined(&self) -> Self {
        Self {
            intervals: self.intervals * 2,
            ..*self
        }
    }
}

/// Simpson's rule on values sampled at `len - 1` (even) equal steps of size `h`.
pub fn simpson_weighted_sum(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0);
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n] + 4.0 * odd + 2.0 * even)
}

/// Outcome of integrating on a grid and on its refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    /// Value on the given grid.
    pub coarse: f64,
    /// Value on the doubled grid; this is the reported estimate.
    pub refined: f64,
}

impl Integral {
    pub fn delta(&self) -> f64 {
        (self.refined - self.coarse).abs()
    }

    /// The refined value if it moved by at most [`CONVERGENCE_TOL`].
    pub fn converged(self) -> Result<f64> {
        if self.delta() <= CONVERGENCE_TOL {
            Ok(self.refined)
        } else {
            Err(Error::Convergence {
                coarse: self.coarse,
                refined: self.refined,
                tolerance: CONVERGENCE_TOL,
            })
        }
    }
}

/// Integrates `f` on `grid` and on its refinement, evaluating `f` once per refined node.
pub fn integrate<F>(grid: &Grid, mut f: F) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    grid.validate()?;
    let fine = grid.refined();
    let values: Vec<f64> = fine.nodes().map(&mut f).collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!(
            "integrand is not finite on the grid ({bad})"
        )));
    }
    let coarse_values: Vec<f64> = values.iter().step_by(2).copied().collect();
    Ok(Integral {
        coarse: simpson_weighted_sum(&coarse_values, grid.step()),
        refined: simpson_weighted_sum(&values, fine.step()),
    })
}

/// [`integrate`] for integrands that can fail; the first error is returned.
pub fn try_integrate<F>(grid: &Grid, mut f: F) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut failure = None;
    let integral = integrate(grid, |x| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    });
    match failure {
        Some(e) => Err(e),
        None => integral,
    }
}

/// Like [`integrate`], but fails with [`Error::Convergence`] if the refinement moved the value.
pub fn simpson<F>(grid: &Grid, f: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(grid, f)?.converged()
}

/// Vector-valued Simpson integration of `f` (output length `dim`), with the same check per coordinate.
pub fn simpson_vec<F>(grid: &Grid, dim: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    grid.validate()?;
    let fine = grid.refined();
    let n = fine.intervals + 1;
    let mut table = vec![0.0; n * dim];
    for (i, row) in table.chunks_exact_mut(dim).enumerate() {
        f(fine.node(i), row);
    }
    let mut out = Vec::with_capacity(dim);
    let mut column = Vec::with_capacity(n);
    for j in 0..dim {
        column.clear();
        column.extend((0..n).map(|i| table[i * dim + j]));
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("integrand is not finite on the grid".into()));
        }
        let coarse: Vec<f64> = column.iter().step_by(2).copied().collect();
        out.push(
            Integral {
                coarse: simpson_weighted_sum(&coarse, grid.step()),
                refined: simpson_weighted_sum(&column, fine.step()),
            }
            .converged()?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact() {
        let g = Grid::new(-1.0, 2.0, 2).unwrap();
        let v = simpson(&g, |x| x * x * x - x).unwrap();
        // (16/4 - 4/2) - (1/4 - 1/2) = 2.25
        assert!((v - 2.25).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let g = Grid::canonical();
        let v = simpson(&g, |x| {
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_reports_convergence_failure() {
        let g = Grid::new(-12.0, 12.0, 4).unwrap();
        let err = simpson(&g, |x| (-0.5 * x * x).exp()).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn odd_interval_count_rejected() {
        assert!(Grid::new(0.0, 1.0, 3).is_err());
        assert!(Grid::new(1.0, 0.0, 4).is_err());
    }

    #[test]
    fn endpoints_exact() {
        let g = Grid::canonical();
        assert_eq!(g.node(0), -12.0);
        assert_eq!(g.node(g.intervals), 12.0);
    }
}
