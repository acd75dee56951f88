use rand::Rng;

use super::{Action, GaussianPolicy};
use crate::error::{check_finite, check_len, Error, Result};

/// Mixture of diagonal Gaussian policies with state-independent softmax weights.
///
/// Parameters flatten as each component's block in order, then the `K` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePolicy {
    components: Vec<GaussianPolicy>,
    logits: Vec<f64>,
}

/// Per-point quantities shared by the mixture density and its gradients.
struct Posterior {
    log_prob: f64,
    responsibilities: Vec<f64>,
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl MixturePolicy {
    pub fn new(components: Vec<GaussianPolicy>, logits: Vec<f64>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Invalid("a mixture needs at least one component".into()))?;
        check_len("logits", components.len(), logits.len())?;
        check_finite("logits", &logits)?;
        for c in &components[1..] {
            check_len("component action_dim", first.action_dim(), c.action_dim())?;
            check_len("component state_dim", first.state_dim(), c.state_dim())?;
        }
        Ok(Self { components, logits })
    }

    /// Wraps a single Gaussian with logit 0.
    pub fn single(component: GaussianPolicy) -> Self {
        Self {
            components: vec![component],
            logits: vec![0.0],
        }
    }

    pub fn components(&self) -> &[GaussianPolicy] {
        &self.components
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.components[0].action_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.components[0].state_dim()
    }

    pub fn param_count(&self) -> usize {
        self.components
            .iter()
            .map(GaussianPolicy::param_count)
            .sum::<usize>()
            + self.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for c in &self.components {
            out.extend(c.params());
        }
        out.extend_from_slice(&self.logits);
        out
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        check_len("parameter vector", self.param_count(), params.len())?;
        let mut offset = 0;
        let mut components = Vec::with_capacity(self.len());
        for c in &self.components {
            let n = c.param_count();
            components.push(c.with_params(&params[offset..offset + n])?);
            offset += n;
        }
        Self::new(components, params[offset..].to_vec())
    }

    pub fn log_weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.logits);
        self.logits.iter().map(|z| z - lse).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights().into_iter().map(f64::exp).collect()
    }

    fn posterior(&self, component_log_probs: &[f64]) -> Posterior {
        let joint: Vec<f64> = self
            .log_weights()
            .iter()
            .zip(component_log_probs)
            .map(|(lw, lp)| lw + lp)
            .collect();
        let log_prob = log_sum_exp(&joint);
        let responsibilities = joint.iter().map(|j| (j - log_prob).exp()).collect();
        Posterior {
            log_prob,
            responsibilities,
        }
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let lps = self
            .components
            .iter()
            .map(|c| c.log_prob(s, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.posterior(&lps).log_prob)
    }

    /// Posterior membership weights r_k = w_k N_k(a) / sum_j w_j N_j(a).
    pub fn responsibilities(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let lps = self
            .components
            .iter()
            .map(|c| c.log_prob(s, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.posterior(&lps).responsibilities)
    }

    pub fn log_prob_and_grad_params(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut lps = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for c in &self.components {
            let (lp, g) = c.log_prob_and_grad_params(s, a)?;
            lps.push(lp);
            grads.push(g);
        }
        let post = self.posterior(&lps);
        let mut out = Vec::with_capacity(self.param_count());
        for (r, g) in post.responsibilities.iter().zip(grads) {
            out.extend(g.into_iter().map(|v| r * v));
        }
        out.extend(
            post.responsibilities
                .iter()
                .zip(self.weights())
                .map(|(r, w)| r - w),
        );
        Ok((post.log_prob, out))
    }

    pub fn grad_logprob_params(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_prob_and_grad_params(s, a)?.1)
    }

    pub fn grad_logprob_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let mut lps = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for c in &self.components {
            lps.push(c.log_prob(s, a)?);
            grads.push(c.grad_logprob_action(s, a)?);
        }
        let post = self.posterior(&lps);
        let mut out = vec![0.0; self.action_dim()];
        for (r, g) in post.responsibilities.iter().zip(grads) {
            for (o, v) in out.iter_mut().zip(g) {
                *o += r * v;
            }
        }
        Ok(out)
    }

    /// Picks a component from the weights by inversion, then samples it.
    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Action> {
        let k = self.sample_component(rng);
        self.components[k].sample(s, rng)
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let weights = self.weights();
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        weights.len() - 1
    }
}
