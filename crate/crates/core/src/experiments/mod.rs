//! Oracles and studies around the two estimators: finite-difference loss
//! gradients, the forward-KL bimodal example, replicated variance studies,
//! and the mixture-size sweep.

mod descent;
pub mod finite_diff;
pub mod gradcheck;
mod kl;
mod stats;
mod variance;

use serde::{Deserialize, Serialize};

pub use descent::{initial_mixture, mixture_sweep, optimize, DescentConfig, SweepBudget, SweepRow};
pub use kl::{
    kl_example, kl_forward, kl_forward_grad, kl_reverse, unit_gaussian, DIVERGENCE_BOUND,
};
pub use stats::{Accumulator, EstimatorStats};
pub use variance::{replica_estimates, replica_seed, variance_study, StudyConfig};

use crate::error::{Error, Result};
use crate::estimators::{exact_loss, loss_grid};
use crate::policies::{Policy, StateBuffer};
use crate::quadrature::Grid;
use crate::targets::TargetQ;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub step: usize,
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    pub iterates: Vec<Iterate>,
    pub config: OptimConfig,
}

impl OptimTrace {
    pub fn final_params(&self) -> &[f64] {
        self.iterates.last().map_or(&[], |it| it.params.as_slice())
    }
}

/// Central-difference gradient of the buffer-averaged exact loss (1-D actions).
///
/// Each state keeps the quadrature grid of the unperturbed policy so both
/// sides of every difference see the same nodes.
pub fn fd_loss_gradient(
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Invalid(
            "finite-difference step must be positive".into(),
        ));
    }
    let grids: Vec<Grid> = buffer
        .states()
        .iter()
        .map(|s| loss_grid(policy, s))
        .collect::<Result<_>>()?;
    finite_diff::central_gradient(&policy.params(), step, |p| {
        let perturbed = policy.with_params(p)?;
        let mut total = 0.0;
        for (s, grid) in buffer.states().iter().zip(&grids) {
            total += exact_loss(&perturbed, q, s, grid)?;
        }
        Ok(total / buffer.len() as f64)
    })
}
