//! The actor loss E_s E_eps[log pi(f(eps; s)|s) - Q(s, f(eps; s))] and its two
//! gradient estimators.
//!
//! The reparameterized estimator differentiates through the sample:
//!
//! ```text
//! g = d/dphi log pi(a|s) |_a fixed + (d/da log pi(a|s) - d/da Q(s, a))^T * d f(eps; s)/dphi,   a = f(eps; s)
//! ```
//!
//! The score-function estimator only needs the density:
//!
//! ```text
//! g = (1 + log pi(a|s) - Q(s, a)) * d/dphi log pi(a|s),   a ~ pi(.|s)
//! ```
//!
//! Both are unbiased for the same gradient when the policy is Gaussian.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::policies::{Policy, StateBuffer};
use crate::quadrature::{try_integrate, Grid};
use crate::rng::{split_streams, LabRng};
use crate::targets::TargetQ;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Differentiate through a = mu + eps * sigma.
    Reparam,
    /// Nabla-log (likelihood ratio) estimator.
    ScoreFn,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Reparam, EstimatorKind::ScoreFn];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Reparam => "reparam",
            EstimatorKind::ScoreFn => "score_fn",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            EstimatorKind::Reparam => 0x5245_5041_5241_4d,
            EstimatorKind::ScoreFn => 0x5343_4f52_4546_4e,
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reparam" => Ok(EstimatorKind::Reparam),
            "score_fn" | "scorefn" | "score" => Ok(EstimatorKind::ScoreFn),
            other => Err(Error::Invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

/// A parameter-gradient estimate, laid out like [`Policy::params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub g: Vec<f64>,
    pub estimator: EstimatorKind,
    pub n_samples: usize,
    /// Root seed of the draws; `None` for estimates built from caller-supplied draws.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub value: f64,
    pub n_samples: usize,
    pub standard_error: f64,
}

fn single(estimator: EstimatorKind, g: Vec<f64>) -> Result<GradEstimate> {
    if let Some(v) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!(
            "{estimator} estimate is not finite ({v})"
        )));
    }
    Ok(GradEstimate {
        g,
        estimator,
        n_samples: 1,
        seed: None,
    })
}

/// The integrand log pi(f(eps; s)|s) - Q(s, f(eps; s)) at one draw.
pub fn reparam_integrand(policy: &Policy, q: &TargetQ, s: &[f64], eps: &[f64]) -> Result<f64> {
    let a = policy.reparameterize(s, eps)?;
    Ok(policy.log_prob(s, &a)? - q.q_eval(s, &a)?)
}

/// Monte Carlo estimate of the reparameterized loss over `n` draws of (s, eps).
pub fn loss_mc<R: Rng + ?Sized>(
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    n: usize,
    rng: &mut R,
) -> Result<LossEstimate> {
    let gaussian = policy.as_gaussian()?;
    if n == 0 {
        return Err(Error::Invalid("loss_mc needs n >= 1".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let s = buffer.sample(rng);
        let eps = gaussian.draw_noise(rng);
        let v = reparam_integrand(policy, q, s, &eps)?;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let standard_error = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(LossEstimate {
        value: mean,
        n_samples: n,
        standard_error,
    })
}

/// Monte Carlo of E_s E_{a ~ pi}[log pi(a|s) - Q(s, a)] with actions drawn
/// directly from the policy, so mixtures are allowed.
pub fn loss_sampled<R: Rng + ?Sized>(
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    n: usize,
    rng: &mut R,
) -> Result<LossEstimate> {
    if n == 0 {
        return Err(Error::Invalid("loss estimate needs n >= 1".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let s = buffer.sample(rng);
        let a = policy.sample(s, rng)?;
        let v = policy.log_prob(s, &a)? - q.q_eval(s, &a)?;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    Ok(LossEstimate {
        value: mean,
        n_samples: n,
        standard_error: if n > 1 {
            (m2 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        },
    })
}

/// Quadrature grid for integrals against pi(.|s): every component's mean +/- 12 std.
pub fn loss_grid(policy: &Policy, s: &[f64]) -> Result<Grid> {
    let (lo, hi) = policy.support(s, 12.0)?;
    Grid::new(lo, hi, 4000)
}

/// int pi(a|s) (log pi(a|s) - Q(s, a)) da by composite Simpson (1-D actions).
///
/// Adding `q.log_partition(s, ..)` turns this into the reverse KL(pi || exp Q / Z).
pub fn exact_loss(policy: &Policy, q: &TargetQ, s: &[f64], grid: &Grid) -> Result<f64> {
    if policy.action_dim() != 1 {
        return Err(Error::Invalid("exact_loss needs a 1-D action space".into()));
    }
    check_len("target action_dim", 1, q.action_dim())?;
    try_integrate(grid, |x| {
        let lp = policy.log_prob(s, &[x])?;
        let density = lp.exp();
        if density == 0.0 {
            return Ok(0.0);
        }
        Ok(density * (lp - q.q_eval(s, &[x])?))
    })?
    .converged()
}

/// [`exact_loss`] averaged over the buffer, each state on its [`loss_grid`].
pub fn exact_loss_buffer(policy: &Policy, q: &TargetQ, buffer: &StateBuffer) -> Result<f64> {
    let mut total = 0.0;
    for s in buffer.states() {
        total += exact_loss(policy, q, s, &loss_grid(policy, s)?)?;
    }
    Ok(total / buffer.len() as f64)
}

/// Exact reverse KL(pi || exp Q / Z) averaged over the buffer (1-D actions).
pub fn reverse_kl_buffer(policy: &Policy, q: &TargetQ, buffer: &StateBuffer) -> Result<f64> {
    let mut total = 0.0;
    for s in buffer.states() {
        total += exact_loss(policy, q, s, &loss_grid(policy, s)?)?
            + q.log_partition(s, &q.default_grid(s)?)?;
    }
    Ok(total / buffer.len() as f64)
}

/// One-draw reparameterized gradient at noise `eps`.
pub fn reparam_grad_single(
    policy: &Policy,
    q: &TargetQ,
    s: &[f64],
    eps: &[f64],
) -> Result<GradEstimate> {
    let gaussian = policy.as_gaussian()?;
    let a = gaussian.reparameterize(s, eps)?;
    let mut g = gaussian.grad_logprob_params(s, &a)?;
    let log_pi_slope = gaussian.grad_logprob_action(s, &a)?;
    let q_slope = q.grad_q_action(s, &a)?;
    let pathwise: Vec<f64> = log_pi_slope
        .iter()
        .zip(&q_slope)
        .map(|(l, r)| l - r)
        .collect();
    let through_sample = gaussian.grad_f_params(s, eps)?.left_mul(&pathwise);
    for (gi, t) in g.iter_mut().zip(through_sample) {
        *gi += t;
    }
    single(EstimatorKind::Reparam, g)
}

/// One-draw score-function gradient at an action `a` drawn from the policy.
pub fn scorefn_grad_single(
    policy: &Policy,
    q: &TargetQ,
    s: &[f64],
    a: &[f64],
) -> Result<GradEstimate> {
    let (log_pi, mut g) = policy.log_prob_and_grad_params(s, a)?;
    let coefficient = 1.0 + log_pi - q.q_eval(s, a)?;
    for gi in &mut g {
        *gi *= coefficient;
    }
    single(EstimatorKind::ScoreFn, g)
}

/// Sum of `n` single-draw estimates; states come from `state_rng`, noise or actions from `noise_rng`.
pub fn accumulate_batch(
    kind: EstimatorKind,
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    n: usize,
    state_rng: &mut LabRng,
    noise_rng: &mut LabRng,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let mut sum = vec![0.0; policy.param_count()];
    match kind {
        EstimatorKind::Reparam => {
            let gaussian = policy.as_gaussian()?;
            for _ in 0..n {
                let s = buffer.sample(state_rng);
                let eps = gaussian.draw_noise(noise_rng);
                add(&mut sum, &reparam_grad_single(policy, q, s, &eps)?.g);
            }
        }
        EstimatorKind::ScoreFn => {
            for _ in 0..n {
                let s = buffer.sample(state_rng);
                let a = policy.sample(s, noise_rng)?;
                add(&mut sum, &scorefn_grad_single(policy, q, s, &a)?.g);
            }
        }
    }
    Ok(sum)
}

fn add(acc: &mut [f64], g: &[f64]) {
    for (a, v) in acc.iter_mut().zip(g) {
        *a += v;
    }
}

/// Mean of `n` i.i.d. single-draw estimates rooted at `seed`.
///
/// States and noise use the two streams of [`split_streams`]`(seed)`.
pub fn grad_batch(
    kind: EstimatorKind,
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    n: usize,
    seed: u64,
) -> Result<GradEstimate> {
    let (mut state_rng, mut noise_rng) = split_streams(seed);
    let sum = accumulate_batch(kind, policy, q, buffer, n, &mut state_rng, &mut noise_rng)?;
    Ok(GradEstimate {
        g: sum.into_iter().map(|v| v / n as f64).collect(),
        estimator: kind,
        n_samples: n,
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{GaussianPolicy, MixturePolicy, HALF_LN_2PI};
    use crate::rng::rng_from_seed;
    use crate::targets::{MixtureLogQ, QuadraticQ};

    fn std_normal() -> Policy {
        GaussianPolicy::constant(&[0.0], &[1.0], 1).unwrap().into()
    }

    fn unit_quadratic() -> TargetQ {
        QuadraticQ::constant(&[0.0], 1.0, 1).unwrap().into()
    }

    #[test]
    fn hand_evaluated_reparam_gradient() {
        let g = reparam_grad_single(&std_normal(), &unit_quadratic(), &[0.0], &[0.3]).unwrap();
        // layout [A, b, C, d]; s = 0 kills the A and C blocks.
        assert!((g.g[1] - 0.3).abs() < 1e-15);
        assert_eq!(g.g[0], 0.0);
        assert_eq!(g.n_samples, 1);
    }

    #[test]
    fn reparam_mean_block_zero_in_matched_configuration() {
        let policy: Policy = GaussianPolicy::new(1, 1, vec![0.5], vec![0.2], vec![0.0], vec![0.0])
            .unwrap()
            .into();
        let q: TargetQ = QuadraticQ::new(1, vec![0.5], vec![0.2], 1.0)
            .unwrap()
            .into();
        let g = reparam_grad_single(&policy, &q, &[1.7], &[0.0]).unwrap();
        assert_eq!(&g.g[..2], &[0.0, 0.0]);
    }

    #[test]
    fn score_mean_block_zero_at_mean() {
        let p = GaussianPolicy::new(1, 1, vec![0.5], vec![0.2], vec![0.1], vec![0.3]).unwrap();
        let s = [0.8];
        let mu = p.mean(&s).unwrap();
        let g = scorefn_grad_single(&p.into(), &unit_quadratic(), &s, &mu).unwrap();
        assert_eq!(&g.g[..2], &[0.0, 0.0]);
    }

    #[test]
    fn score_estimate_reduces_for_single_component_mixture() {
        let g = GaussianPolicy::new(1, 1, vec![0.5], vec![0.2], vec![0.1], vec![0.3]).unwrap();
        let m: Policy = MixturePolicy::single(g.clone()).into();
        let q = unit_quadratic();
        let (s, a) = ([0.4], [1.1]);
        let from_mixture = scorefn_grad_single(&m, &q, &s, &a).unwrap().g;
        let from_gaussian = scorefn_grad_single(&g.into(), &q, &s, &a).unwrap().g;
        for (x, y) in from_mixture.iter().zip(&from_gaussian) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixture_rejected_for_reparameterization() {
        let m: Policy =
            MixturePolicy::single(GaussianPolicy::constant(&[0.0], &[1.0], 1).unwrap()).into();
        let q = unit_quadratic();
        let b = StateBuffer::unit(1);
        assert!(matches!(
            reparam_grad_single(&m, &q, &[0.0], &[0.0]),
            Err(Error::UnsupportedReparameterization)
        ));
        assert!(matches!(
            loss_mc(&m, &q, &b, 10, &mut rng_from_seed(0)),
            Err(Error::UnsupportedReparameterization)
        ));
        assert!(matches!(
            grad_batch(EstimatorKind::Reparam, &m, &q, &b, 10, 0),
            Err(Error::UnsupportedReparameterization)
        ));
        assert!(grad_batch(EstimatorKind::ScoreFn, &m, &q, &b, 10, 0).is_ok());
    }

    #[test]
    fn exact_loss_matched_equals_negative_log_partition() {
        let v = exact_loss(&std_normal(), &unit_quadratic(), &[0.0], &Grid::canonical()).unwrap();
        assert!((v + HALF_LN_2PI).abs() < 1e-8, "{v}");
    }

    #[test]
    fn reverse_kl_to_bimodal_is_positive() {
        let h: TargetQ = MixtureLogQ::canonical().into();
        let kl = exact_loss(&std_normal(), &h, &[0.0], &Grid::canonical()).unwrap()
            + h.log_partition(&[0.0], &Grid::canonical()).unwrap();
        assert!(kl > 0.0);
    }

    #[test]
    fn loss_mc_n1_is_reproducible() {
        let b = StateBuffer::unit(1);
        let a = loss_mc(
            &std_normal(),
            &unit_quadratic(),
            &b,
            1,
            &mut rng_from_seed(3),
        )
        .unwrap();
        let c = loss_mc(
            &std_normal(),
            &unit_quadratic(),
            &b,
            1,
            &mut rng_from_seed(3),
        )
        .unwrap();
        assert_eq!(a.value.to_bits(), c.value.to_bits());
        assert_eq!(a.standard_error, 0.0);
    }

    #[test]
    fn loss_mc_matched_policy_hits_negative_log_partition() {
        let b = StateBuffer::unit(1);
        let est = loss_mc(
            &std_normal(),
            &unit_quadratic(),
            &b,
            100_000,
            &mut rng_from_seed(11),
        )
        .unwrap();
        assert!(
            (est.value + HALF_LN_2PI).abs() < 3.0 * est.standard_error.max(1e-12),
            "{est:?}"
        );
    }

    #[test]
    fn batch_of_one_equals_single_draw() {
        let policy: Policy = GaussianPolicy::new(1, 1, vec![0.3], vec![0.1], vec![0.2], vec![-0.1])
            .unwrap()
            .into();
        let q: TargetQ = QuadraticQ::new(1, vec![0.7], vec![-0.2], 2.0)
            .unwrap()
            .into();
        let b = StateBuffer::new(vec![vec![-1.0], vec![0.5], vec![2.0]]).unwrap();
        let seed = 77;

        let batch = grad_batch(EstimatorKind::Reparam, &policy, &q, &b, 1, seed).unwrap();
        let (mut sr, mut nr) = split_streams(seed);
        let s = b.sample(&mut sr).to_vec();
        let eps = policy.as_gaussian().unwrap().draw_noise(&mut nr);
        assert_eq!(
            batch.g,
            reparam_grad_single(&policy, &q, &s, &eps).unwrap().g
        );

        let batch = grad_batch(EstimatorKind::ScoreFn, &policy, &q, &b, 1, seed).unwrap();
        let (mut sr, mut nr) = split_streams(seed);
        let s = b.sample(&mut sr).to_vec();
        let a = policy.sample(&s, &mut nr).unwrap();
        assert_eq!(batch.g, scorefn_grad_single(&policy, &q, &s, &a).unwrap().g);
    }

    #[test]
    fn batch_is_deterministic() {
        let policy = std_normal();
        let q = unit_quadratic();
        let b = StateBuffer::unit(1);
        for kind in EstimatorKind::ALL {
            let x = grad_batch(kind, &policy, &q, &b, 500, 9).unwrap();
            let y = grad_batch(kind, &policy, &q, &b, 500, 9).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn zero_batch_rejected() {
        assert!(grad_batch(
            EstimatorKind::ScoreFn,
            &std_normal(),
            &unit_quadratic(),
            &StateBuffer::unit(1),
            0,
            0
        )
        .is_err());
    }
}
