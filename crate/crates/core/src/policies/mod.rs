//! Action distributions: diagonal Gaussians with affine state dependence and
//! mixtures of them, with sampling, log-density and the analytic derivatives
//! both gradient estimators consume.

mod buffer;
mod gaussian;
mod json;
mod mixture;

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use buffer::StateBuffer;
pub use gaussian::{GaussianPolicy, Moments, SIGMA_FLOOR};
pub use json::{GaussianDoc, PolicyDoc};
pub(crate) use mixture::log_sum_exp;
pub use mixture::MixturePolicy;

use crate::error::{Error, Result};

/// ln(2 pi) / 2.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// A point in action space.
#[derive(Debug, Clone, PartialEq)]
pub struct Action(pub Vec<f64>);

impl Deref for Action {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Dense row-major matrix of partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// v^T J for a row-space vector `v`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, j) in out.iter_mut().zip(self.row(i)) {
                *o += vi * j;
            }
        }
        out
    }
}

/// Either policy family, as loaded from a policy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDoc", into = "PolicyDoc")]
pub enum Policy {
    Gaussian(GaussianPolicy),
    Mixture(MixturePolicy),
}

impl From<GaussianPolicy> for Policy {
    fn from(p: GaussianPolicy) -> Self {
        Policy::Gaussian(p)
    }
}

impl From<MixturePolicy> for Policy {
    fn from(p: MixturePolicy) -> Self {
        Policy::Mixture(p)
    }
}

impl Policy {
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Gaussian(_) => "gaussian",
            Policy::Mixture(_) => "mixture",
        }
    }

    /// The Gaussian inside, or [`Error::UnsupportedReparameterization`] for a mixture.
    pub fn as_gaussian(&self) -> Result<&GaussianPolicy> {
        match self {
            Policy::Gaussian(g) => Ok(g),
            Policy::Mixture(_) => Err(Error::UnsupportedReparameterization),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Policy::Gaussian(p) => p.action_dim(),
            Policy::Mixture(p) => p.action_dim(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Policy::Gaussian(p) => p.state_dim(),
            Policy::Mixture(p) => p.state_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Policy::Gaussian(p) => p.param_count(),
            Policy::Mixture(p) => p.param_count(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Policy::Gaussian(p) => p.params(),
            Policy::Mixture(p) => p.params(),
        }
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Ok(match self {
            Policy::Gaussian(p) => Policy::Gaussian(p.with_params(params)?),
            Policy::Mixture(p) => Policy::Mixture(p.with_params(params)?),
        })
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        match self {
            Policy::Gaussian(p) => p.log_prob(s, a),
            Policy::Mixture(p) => p.log_prob(s, a),
        }
    }

    pub fn log_prob_and_grad_params(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Policy::Gaussian(p) => p.log_prob_and_grad_params(s, a),
            Policy::Mixture(p) => p.log_prob_and_grad_params(s, a),
        }
    }

    pub fn grad_logprob_params(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_prob_and_grad_params(s, a)?.1)
    }

    pub fn grad_logprob_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        match self {
            Policy::Gaussian(p) => p.grad_logprob_action(s, a),
            Policy::Mixture(p) => p.grad_logprob_action(s, a),
        }
    }

    pub fn reparameterize(&self, s: &[f64], eps: &[f64]) -> Result<Action> {
        self.as_gaussian()?.reparameterize(s, eps)
    }

    pub fn grad_f_params(&self, s: &[f64], eps: &[f64]) -> Result<Jacobian> {
        self.as_gaussian()?.grad_f_params(s, eps)
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Action> {
        match self {
            Policy::Gaussian(p) => p.sample(s, rng),
            Policy::Mixture(p) => p.sample(s, rng),
        }
    }

    /// Smallest interval holding every component's mean +/- `width` standard
    /// deviations at `s` (first action coordinate).
    pub fn support(&self, s: &[f64], width: f64) -> Result<(f64, f64)> {
        let comps: Vec<&GaussianPolicy> = match self {
            Policy::Gaussian(p) => vec![p],
            Policy::Mixture(p) => p.components().iter().collect(),
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in comps {
            let m = c.moments(s)?;
            lo = lo.min(m.mean[0] - width * m.std[0]);
            hi = hi.max(m.mean[0] + width * m.std[0]);
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_rejects_reparameterization() {
        let m: Policy =
            MixturePolicy::single(GaussianPolicy::constant(&[0.0], &[1.0], 1).unwrap()).into();
        assert!(matches!(
            m.grad_f_params(&[0.0], &[0.1]),
            Err(Error::UnsupportedReparameterization)
        ));
        assert!(matches!(
            m.reparameterize(&[0.0], &[0.1]),
            Err(Error::UnsupportedReparameterization)
        ));
    }

    #[test]
    fn left_mul_matches_manual() {
        let p = GaussianPolicy::new(
            2,
            1,
            vec![1.0, 2.0],
            vec![0.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        let j = p.grad_f_params(&[2.0], &[1.0, -1.0]).unwrap();
        let v = j.left_mul(&[1.0, 10.0]);
        let manual: Vec<f64> = (0..j.cols())
            .map(|c| j.get(0, c) + 10.0 * j.get(1, c))
            .collect();
        assert_eq!(v, manual);
    }
}
