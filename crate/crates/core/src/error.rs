use thiserror::Error;

use crate::experiments::OptimTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Mixture policies have no parameter-differentiable sampling path.
    #[error("the reparameterization trick cannot be used with a mixture policy")]
    UnsupportedReparameterization,

    /// Composite Simpson changed by more than the tolerance when the grid was refined.
    #[error(
        "quadrature not converged: coarse={coarse}, refined={refined} (tolerance {tolerance:e})"
    )]
    Convergence {
        coarse: f64,
        refined: f64,
        tolerance: f64,
    },

    #[error("optimization diverged at step {step} (|phi| or objective out of range)")]
    Divergence { step: usize, trace: Box<OptimTrace> },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Invalid(format!(
            "{what}: non-finite entry at index {i}: {}",
            values[i]
        ))),
    }
}
