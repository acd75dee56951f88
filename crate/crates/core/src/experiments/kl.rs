//! Forward KL(h || pi) against the log-mixture target, and the descent that
//! minimizes it over the mean of a unit-variance Gaussian.

use super::{Iterate, OptimConfig, OptimTrace};
use crate::error::{check_len, Error, Result};
use crate::estimators::{exact_loss, loss_grid};
use crate::policies::{GaussianPolicy, Policy};
use crate::quadrature::{simpson_vec, try_integrate, Grid};
use crate::targets::{MixtureLogQ, TargetQ};

/// |phi| beyond which the descent is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e3;

/// int h(a) (ln h(a) - log pi(a|s)) da on `grid` (1-D).
pub fn kl_forward(h: &MixtureLogQ, policy: &Policy, s: &[f64], grid: &Grid) -> Result<f64> {
    check_len("target action_dim", 1, h.action_dim())?;
    check_len("policy action_dim", 1, policy.action_dim())?;
    try_integrate(grid, |x| {
        let lh = h.log_density(&[x])?;
        let density = lh.exp();
        if density == 0.0 {
            return Ok(0.0);
        }
        Ok(density * (lh - policy.log_prob(s, &[x])?))
    })?
    .converged()
}

/// Gradient of [`kl_forward`] in the policy parameters: -int h(a) d/dphi log pi(a|s) da.
pub fn kl_forward_grad(
    h: &MixtureLogQ,
    policy: &Policy,
    s: &[f64],
    grid: &Grid,
) -> Result<Vec<f64>> {
    check_len("target action_dim", 1, h.action_dim())?;
    check_len("policy action_dim", 1, policy.action_dim())?;
    let dim = policy.param_count();
    let mut failure = None;
    let out = simpson_vec(grid, dim, |x, row| {
        let density = match h.log_density(&[x]) {
            Ok(v) => v.exp(),
            Err(e) => {
                failure.get_or_insert(e);
                return;
            }
        };
        match policy.grad_logprob_params(s, &[x]) {
            Ok(g) => row.iter_mut().zip(g).for_each(|(r, v)| *r = -density * v),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => out,
    }
}

/// Reverse KL(pi || h) at one state, on the policy's own grid.
pub fn kl_reverse(h: &MixtureLogQ, policy: &Policy, s: &[f64]) -> Result<f64> {
    let target = TargetQ::LogMixture(h.clone());
    Ok(exact_loss(policy, &target, s, &loss_grid(policy, s)?)?
        + target.log_partition_closed_form(s)?)
}

/// N(phi, 1) as a state-free policy.
pub fn unit_gaussian(phi: f64) -> Policy {
    Policy::Gaussian(GaussianPolicy::constant(&[phi], &[1.0], 0).expect("unit std is valid"))
}

/// Gradient descent on KL(h || N(phi, 1)) over scalar phi, with h the
/// canonical +/-2 bimodal target and quadrature gradients on [-12, 12].
pub fn kl_example(lr: f64, iters: usize, phi0: f64) -> Result<OptimTrace> {
    if !(lr.is_finite() && lr > 0.0) || !phi0.is_finite() {
        return Err(Error::Invalid(
            "kl_example needs a positive lr and finite phi0".into(),
        ));
    }
    let h = MixtureLogQ::canonical();
    let grid = Grid::canonical();
    let config = OptimConfig { lr, iters, seed: 0 };
    let mut trace = OptimTrace {
        iterates: Vec::with_capacity(iters + 1),
        config,
    };
    let mut phi = phi0;
    for step in 0..=iters {
        let policy = unit_gaussian(phi);
        let objective = kl_forward(&h, &policy, &[], &grid)?;
        if !objective.is_finite() || phi.abs() > DIVERGENCE_BOUND {
            return Err(Error::Divergence {
                step,
                trace: Box::new(trace),
            });
        }
        trace.iterates.push(Iterate {
            step,
            params: vec![phi],
            objective,
        });
        if step == iters {
            break;
        }
        // Parameter layout for state_dim 0 is [b, d]; only the mean moves.
        let grad = kl_forward_grad(&h, &policy, &[], &grid)?;
        phi -= lr * grad[0];
    }
    Ok(trace)
}
