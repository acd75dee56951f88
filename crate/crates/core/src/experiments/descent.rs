//! Plain stochastic gradient descent on the actor loss, and the mixture-size sweep built on it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kl::DIVERGENCE_BOUND;
use super::{Iterate, OptimConfig, OptimTrace};
use crate::error::{Error, Result};
use crate::estimators::{
    accumulate_batch, exact_loss_buffer, loss_sampled, reverse_kl_buffer, EstimatorKind,
};
use crate::policies::{GaussianPolicy, MixturePolicy, Policy, StateBuffer};
use crate::rng::{derive_seed, rng_from_seed, split_streams};
use crate::targets::{MixtureLogQ, TargetQ};

/// Draws used for the sampled objective when quadrature is unavailable.
const SAMPLED_OBJECTIVE_DRAWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
    pub seed: u64,
    /// Objective is evaluated every `record_every` steps and at the last step.
    pub record_every: usize,
}

fn objective(
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    seed: u64,
    step: usize,
) -> Result<f64> {
    if policy.action_dim() == 1 {
        exact_loss_buffer(policy, q, buffer)
    } else {
        let mut rng = rng_from_seed(derive_seed(seed, step as u64));
        Ok(loss_sampled(policy, q, buffer, SAMPLED_OBJECTIVE_DRAWS, &mut rng)?.value)
    }
}

fn out_of_range(params: &[f64]) -> bool {
    params
        .iter()
        .any(|p| !p.is_finite() || p.abs() > DIVERGENCE_BOUND)
}

/// Minimizes the actor loss with `kind` batch gradients and a fixed step size.
///
/// The objective is the exact loss for 1-D actions, otherwise a sampled estimate.
pub fn optimize(
    kind: EstimatorKind,
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    config: &DescentConfig,
) -> Result<(Policy, OptimTrace)> {
    if !(config.lr > 0.0 && config.lr.is_finite()) || config.batch == 0 || config.record_every == 0
    {
        return Err(Error::Invalid(
            "descent needs lr > 0, batch >= 1, record_every >= 1".into(),
        ));
    }
    if kind == EstimatorKind::Reparam {
        policy.as_gaussian()?;
    }
    let mut trace = OptimTrace {
        iterates: Vec::new(),
        config: OptimConfig {
            lr: config.lr,
            iters: config.iters,
            seed: config.seed,
        },
    };
    let (mut state_rng, mut noise_rng) = split_streams(config.seed);
    let mut current = policy.clone();
    let mut params = current.params();
    for step in 0..=config.iters {
        if step % config.record_every == 0 || step == config.iters {
            let value = objective(&current, q, buffer, config.seed, step);
            match value {
                Ok(v) if v.is_finite() => trace.iterates.push(Iterate {
                    step,
                    params: params.clone(),
                    objective: v,
                }),
                Ok(_) | Err(Error::Invalid(_)) | Err(Error::Convergence { .. }) => {
                    return Err(Error::Divergence {
                        step,
                        trace: Box::new(trace),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        if step == config.iters {
            break;
        }
        let sum = accumulate_batch(
            kind,
            &current,
            q,
            buffer,
            config.batch,
            &mut state_rng,
            &mut noise_rng,
        );
        let sum = match sum {
            Ok(s) => s,
            Err(Error::Invalid(_)) => {
                return Err(Error::Divergence {
                    step,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e),
        };
        let scale = config.lr / config.batch as f64;
        for (p, g) in params.iter_mut().zip(&sum) {
            *p -= scale * g;
        }
        if out_of_range(&params) {
            return Err(Error::Divergence {
                step: step + 1,
                trace: Box::new(trace),
            });
        }
        current = current.with_params(&params)?;
    }
    Ok((current, trace))
}

/// Step size, step count and batch size for each mixture fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepBudget {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
}

impl Default for SweepBudget {
    fn default() -> Self {
        Self {
            lr: 0.01,
            steps: 20_000,
            batch: 64,
        }
    }
}

/// Outcome for one mixture size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    /// Exact reverse KL(pi || h) after training; `None` if the fit failed.
    pub reverse_kl: Option<f64>,
    pub error: Option<String>,
    pub policy: Option<Policy>,
    pub trace: OptimTrace,
}

/// K state-free unit-variance components with means evenly spaced on [-3, 3]
/// (0 for K = 1), jittered by N(0, 0.1^2), and uniform logits.
pub fn initial_mixture(k: usize, seed: u64) -> Result<MixturePolicy> {
    if k == 0 {
        return Err(Error::Invalid("mixture size must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let components = (0..k)
        .map(|i| {
            let base = if k == 1 {
                0.0
            } else {
                -3.0 + 6.0 * i as f64 / (k - 1) as f64
            };
            let jitter: f64 = rng.sample(rand_distr::StandardNormal);
            GaussianPolicy::constant(&[base + 0.1 * jitter], &[1.0], 0)
        })
        .collect::<Result<Vec<_>>>()?;
    MixturePolicy::new(components, vec![0.0; k])
}

fn fit(k: usize, target: &MixtureLogQ, budget: &SweepBudget, seed: u64) -> SweepRow {
    let seed = derive_seed(seed, k as u64);
    let q = TargetQ::LogMixture(target.clone());
    let buffer = StateBuffer::unit(0);
    let config = DescentConfig {
        lr: budget.lr,
        iters: budget.steps,
        batch: budget.batch,
        seed,
        record_every: (budget.steps / 20).max(1),
    };
    let result = initial_mixture(k, derive_seed(seed, 0x1a11))
        .and_then(|init| optimize(EstimatorKind::ScoreFn, &init.into(), &q, &buffer, &config))
        .and_then(|(policy, trace)| Ok((reverse_kl_buffer(&policy, &q, &buffer)?, policy, trace)));
    match result {
        Ok((kl, policy, trace)) => SweepRow {
            k,
            reverse_kl: Some(kl),
            error: None,
            policy: Some(policy),
            trace,
        },
        Err(e) => {
            let trace = match &e {
                Error::Divergence { trace, .. } => (**trace).clone(),
                _ => OptimTrace {
                    iterates: Vec::new(),
                    config: OptimConfig {
                        lr: budget.lr,
                        iters: budget.steps,
                        seed,
                    },
                },
            };
            SweepRow {
                k,
                reverse_kl: None,
                error: Some(e.to_string()),
                policy: None,
                trace,
            }
        }
    }
}

/// Fits a K-component mixture to `target` for every K by score-function SGD on
/// the actor loss and reports the attained reverse KL. Per-K failures are
/// recorded in the row; the sweep itself only fails on invalid input.
pub fn mixture_sweep(
    k_list: &[usize],
    target: &MixtureLogQ,
    budget: &SweepBudget,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if k_list.is_empty() {
        return Err(Error::Invalid("K list must not be empty".into()));
    }
    if k_list.contains(&0) {
        return Err(Error::Invalid("every K must be at least 1".into()));
    }
    if target.action_dim() != 1 {
        return Err(Error::Invalid("mixture sweep needs a 1-D target".into()));
    }
    if !(budget.lr > 0.0) || budget.batch == 0 {
        return Err(Error::Invalid(
            "sweep budget needs lr > 0 and batch >= 1".into(),
        ));
    }
    Ok(k_list
        .par_iter()
        .map(|&k| fit(k, target, budget, seed))
        .collect())
}
