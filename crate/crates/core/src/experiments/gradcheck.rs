//! Analytic-versus-finite-difference checks over seeded random instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::finite_diff::{central_gradient, central_jacobian, max_relative_error, FD_STEP};
use crate::error::Result;
use crate::estimators::{reparam_grad_single, reparam_integrand};
use crate::policies::{GaussianPolicy, MixturePolicy, Policy, StateBuffer};
use crate::rng::{derive_seed, rng_from_seed, LabRng};
use crate::targets::{MixtureLogQ, QuadraticQ, TargetQ};

/// Tolerance for the per-factor gradients.
pub const FACTOR_TOL: f64 = 1e-6;
/// Tolerance for the full reparameterized estimate against the total derivative.
pub const TOTAL_DERIVATIVE_TOL: f64 = 1e-5;

/// One seeded random configuration.
#[derive(Debug, Clone)]
pub struct Instance {
    pub gaussian: GaussianPolicy,
    pub mixture: MixturePolicy,
    pub quadratic: TargetQ,
    pub log_mixture: TargetQ,
    pub state: Vec<f64>,
    pub noise: Vec<f64>,
    /// Sampled from `gaussian`.
    pub action: Vec<f64>,
    /// Sampled from `mixture`.
    pub mixture_action: Vec<f64>,
}

fn uniform_vec(rng: &mut LabRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_gaussian(rng: &mut LabRng, ad: usize, sd: usize) -> GaussianPolicy {
    GaussianPolicy::new(
        ad,
        sd,
        uniform_vec(rng, ad * sd, -1.0, 1.0),
        uniform_vec(rng, ad, -1.0, 1.0),
        uniform_vec(rng, ad * sd, -0.3, 0.3),
        uniform_vec(rng, ad, -0.7, 0.3),
    )
    .expect("shapes are consistent")
}

/// Random instance with the given action dimension and 1 to 3 state coordinates.
pub fn random_instance(seed: u64, action_dim: usize) -> Instance {
    let mut rng = rng_from_seed(seed);
    let sd = rng.random_range(1..=3);
    let gaussian = random_gaussian(&mut rng, action_dim, sd);
    let k = rng.random_range(2..=3);
    let mixture = MixturePolicy::new(
        (0..k)
            .map(|_| random_gaussian(&mut rng, action_dim, sd))
            .collect(),
        uniform_vec(&mut rng, k, -1.0, 1.0),
    )
    .expect("shapes are consistent");
    let quadratic = QuadraticQ::new(
        sd,
        uniform_vec(&mut rng, action_dim * sd, -1.0, 1.0),
        uniform_vec(&mut rng, action_dim, -1.0, 1.0),
        rng.random_range(0.5..2.0),
    )
    .expect("valid quadratic")
    .into();
    let kq = rng.random_range(1..=3);
    let raw = uniform_vec(&mut rng, kq, 0.2, 1.0);
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..kq - 1].iter().sum();
    weights[kq - 1] = 1.0 - head;
    let log_mixture = MixtureLogQ::new(
        (0..kq)
            .map(|_| uniform_vec(&mut rng, action_dim, -2.0, 2.0))
            .collect(),
        uniform_vec(&mut rng, kq, 0.5, 1.5),
        weights,
    )
    .expect("valid log-mixture")
    .into();
    let state = uniform_vec(&mut rng, sd, -1.0, 1.0);
    let noise = gaussian.draw_noise(&mut rng);
    let action = gaussian.reparameterize(&state, &noise).expect("dims").0;
    let mixture_action = mixture.sample(&state, &mut rng).expect("dims").0;
    Instance {
        gaussian,
        mixture,
        quadratic,
        log_mixture,
        state,
        noise,
        action,
        mixture_action,
    }
}

/// Worst error per checked operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationReport {
    pub operation: String,
    pub worst_relative_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl OperationReport {
    pub fn passed(&self) -> bool {
        self.worst_relative_error.is_finite() && self.worst_relative_error < self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub operations: Vec<OperationReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.operations.iter().all(OperationReport::passed)
    }

    fn record(&mut self, operation: &str, tolerance: f64, err: f64) {
        let err = if err.is_nan() { f64::INFINITY } else { err };
        match self
            .operations
            .iter_mut()
            .find(|o| o.operation == operation)
        {
            Some(o) => {
                o.worst_relative_error = o.worst_relative_error.max(err);
                o.cases += 1;
            }
            None => self.operations.push(OperationReport {
                operation: operation.to_string(),
                worst_relative_error: err,
                tolerance,
                cases: 1,
            }),
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        for o in &other.operations {
            for _ in 0..o.cases {
                self.record(&o.operation, o.tolerance, o.worst_relative_error);
            }
        }
    }
}

fn logprob_params_error(policy: &Policy, s: &[f64], a: &[f64]) -> Result<f64> {
    let analytic = policy.grad_logprob_params(s, a)?;
    let numeric = central_gradient(&policy.params(), FD_STEP, |p| {
        policy.with_params(p)?.log_prob(s, a)
    })?;
    Ok(max_relative_error(&analytic, &numeric))
}

fn logprob_action_error(policy: &Policy, s: &[f64], a: &[f64]) -> Result<f64> {
    let analytic = policy.grad_logprob_action(s, a)?;
    let numeric = central_gradient(a, FD_STEP, |x| policy.log_prob(s, x))?;
    Ok(max_relative_error(&analytic, &numeric))
}

fn f_params_error(policy: &GaussianPolicy, s: &[f64], eps: &[f64]) -> Result<f64> {
    let analytic = policy.grad_f_params(s, eps)?;
    let numeric = central_jacobian(&policy.params(), FD_STEP, |p| {
        Ok(policy.with_params(p)?.reparameterize(s, eps)?.0)
    })?;
    let mut worst: f64 = 0.0;
    for (i, row) in numeric.iter().enumerate() {
        worst = worst.max(max_relative_error(analytic.row(i), row));
    }
    Ok(worst)
}

fn q_action_error(q: &TargetQ, s: &[f64], a: &[f64]) -> Result<f64> {
    let analytic = q.grad_q_action(s, a)?;
    let numeric = central_gradient(a, FD_STEP, |x| q.q_eval(s, x))?;
    Ok(max_relative_error(&analytic, &numeric))
}

fn total_derivative_error(policy: &Policy, q: &TargetQ, s: &[f64], eps: &[f64]) -> Result<f64> {
    let analytic = reparam_grad_single(policy, q, s, eps)?.g;
    let numeric = central_gradient(&policy.params(), FD_STEP, |p| {
        reparam_integrand(&policy.with_params(p)?, q, s, eps)
    })?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Checks every analytic derivative on one random instance.
pub fn check_instance(inst: &Instance) -> Result<GradCheckReport> {
    let mut r = GradCheckReport::default();
    let g: Policy = inst.gaussian.clone().into();
    let m: Policy = inst.mixture.clone().into();
    let s = &inst.state;
    r.record(
        "grad_logprob_params/gaussian",
        FACTOR_TOL,
        logprob_params_error(&g, s, &inst.action)?,
    );
    r.record(
        "grad_logprob_params/mixture",
        FACTOR_TOL,
        logprob_params_error(&m, s, &inst.mixture_action)?,
    );
    r.record(
        "grad_logprob_action/gaussian",
        FACTOR_TOL,
        logprob_action_error(&g, s, &inst.action)?,
    );
    r.record(
        "grad_logprob_action/mixture",
        FACTOR_TOL,
        logprob_action_error(&m, s, &inst.mixture_action)?,
    );
    r.record(
        "grad_f_params",
        FACTOR_TOL,
        f_params_error(&inst.gaussian, s, &inst.noise)?,
    );
    r.record(
        "grad_q_action/quadratic",
        FACTOR_TOL,
        q_action_error(&inst.quadratic, s, &inst.action)?,
    );
    r.record(
        "grad_q_action/log_mixture",
        FACTOR_TOL,
        q_action_error(&inst.log_mixture, s, &inst.action)?,
    );
    for (name, q) in [
        ("quadratic", &inst.quadratic),
        ("log_mixture", &inst.log_mixture),
    ] {
        r.record(
            &format!("reparam_total_derivative/{name}"),
            TOTAL_DERIVATIVE_TOL,
            total_derivative_error(&g, q, s, &inst.noise)?,
        );
    }
    Ok(r)
}

/// Runs [`check_instance`] on `cases` seeded instances.
pub fn check_random(seed: u64, cases: usize, action_dim: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();
    for i in 0..cases {
        report.merge(&check_instance(&random_instance(
            derive_seed(seed, i as u64),
            action_dim,
        ))?);
    }
    Ok(report)
}

/// Checks a user-supplied configuration at every buffer state with `draws` sampled actions each.
pub fn check_configured(
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    draws: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut r = GradCheckReport::default();
    let mut rng = rng_from_seed(seed);
    for s in buffer.states() {
        for _ in 0..draws {
            match policy {
                Policy::Gaussian(g) => {
                    let eps = g.draw_noise(&mut rng);
                    let a = g.reparameterize(s, &eps)?;
                    r.record(
                        "configured/grad_logprob_params",
                        FACTOR_TOL,
                        logprob_params_error(policy, s, &a)?,
                    );
                    r.record(
                        "configured/grad_logprob_action",
                        FACTOR_TOL,
                        logprob_action_error(policy, s, &a)?,
                    );
                    r.record(
                        "configured/grad_f_params",
                        FACTOR_TOL,
                        f_params_error(g, s, &eps)?,
                    );
                    r.record(
                        "configured/grad_q_action",
                        FACTOR_TOL,
                        q_action_error(q, s, &a)?,
                    );
                    r.record(
                        "configured/reparam_total_derivative",
                        TOTAL_DERIVATIVE_TOL,
                        total_derivative_error(policy, q, s, &eps)?,
                    );
                }
                Policy::Mixture(_) => {
                    let a = policy.sample(s, &mut rng)?;
                    r.record(
                        "configured/grad_logprob_params",
                        FACTOR_TOL,
                        logprob_params_error(policy, s, &a)?,
                    );
                    r.record(
                        "configured/grad_logprob_action",
                        FACTOR_TOL,
                        logprob_action_error(policy, s, &a)?,
                    );
                    r.record(
                        "configured/grad_q_action",
                        FACTOR_TOL,
                        q_action_error(q, s, &a)?,
                    );
                }
            }
        }
    }
    Ok(r)
}
