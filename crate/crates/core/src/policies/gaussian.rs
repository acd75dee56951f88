use rand::Rng;
use rand_distr::StandardNormal;

use super::{Action, Jacobian, HALF_LN_2PI};
use crate::error::{check_finite, check_len, Error, Result};

/// Lower clamp applied to every standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian policy with affine mean `A·s + b` and affine log-std `C·s + d`.
///
/// Parameters flatten as `A` (row-major), `b`, `C` (row-major), `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    action_dim: usize,
    state_dim: usize,
    mean_weights: Vec<f64>,
    mean_bias: Vec<f64>,
    log_std_weights: Vec<f64>,
    log_std_bias: Vec<f64>,
}

/// Mean and standard deviation at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub log_std: Vec<f64>,
    /// `true` where the floor is active; the std is then constant in the parameters.
    pub floored: Vec<bool>,
}

impl Moments {
    /// d sigma_i / d (C s + d)_i: sigma itself, or 0 under the floor.
    fn std_slope(&self, i: usize) -> f64 {
        if self.floored[i] {
            0.0
        } else {
            self.std[i]
        }
    }
}

impl GaussianPolicy {
    pub fn new(
        action_dim: usize,
        state_dim: usize,
        mean_weights: Vec<f64>,
        mean_bias: Vec<f64>,
        log_std_weights: Vec<f64>,
        log_std_bias: Vec<f64>,
    ) -> Result<Self> {
        if action_dim == 0 {
            return Err(Error::Invalid("action_dim must be at least 1".into()));
        }
        check_len("A", action_dim * state_dim, mean_weights.len())?;
        check_len("b", action_dim, mean_bias.len())?;
        check_len("C", action_dim * state_dim, log_std_weights.len())?;
        check_len("d", action_dim, log_std_bias.len())?;
        for (name, v) in [
            ("A", &mean_weights),
            ("b", &mean_bias),
            ("C", &log_std_weights),
            ("d", &log_std_bias),
        ] {
            check_finite(name, v)?;
        }
        Ok(Self {
            action_dim,
            state_dim,
            mean_weights,
            mean_bias,
            log_std_weights,
            log_std_bias,
        })
    }

    /// State-independent policy N(mean, std^2) (A = C = 0).
    pub fn constant(mean: &[f64], std: &[f64], state_dim: usize) -> Result<Self> {
        check_len("std", mean.len(), std.len())?;
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Invalid("std must be positive".into()));
        }
        let ad = mean.len();
        Self::new(
            ad,
            state_dim,
            vec![0.0; ad * state_dim],
            mean.to_vec(),
            vec![0.0; ad * state_dim],
            std.iter().map(|s| s.ln()).collect(),
        )
    }

    /// Rebuilds a policy from a flat parameter vector.
    pub fn from_params(action_dim: usize, state_dim: usize, params: &[f64]) -> Result<Self> {
        let w = action_dim * state_dim;
        check_len("parameter vector", 2 * (w + action_dim), params.len())?;
        let (a, rest) = params.split_at(w);
        let (b, rest) = rest.split_at(action_dim);
        let (c, d) = rest.split_at(w);
        Self::new(
            action_dim,
            state_dim,
            a.to_vec(),
            b.to_vec(),
            c.to_vec(),
            d.to_vec(),
        )
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::from_params(self.action_dim, self.state_dim, params)
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_count(&self) -> usize {
        2 * self.action_dim * (self.state_dim + 1)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.mean_weights);
        out.extend_from_slice(&self.mean_bias);
        out.extend_from_slice(&self.log_std_weights);
        out.extend_from_slice(&self.log_std_bias);
        out
    }

    pub fn mean_weights(&self) -> &[f64] {
        &self.mean_weights
    }
    pub fn mean_bias(&self) -> &[f64] {
        &self.mean_bias
    }
    pub fn log_std_weights(&self) -> &[f64] {
        &self.log_std_weights
    }
    pub fn log_std_bias(&self) -> &[f64] {
        &self.log_std_bias
    }

    fn affine(&self, weights: &[f64], bias: &[f64], s: &[f64]) -> Vec<f64> {
        bias.iter()
            .enumerate()
            .map(|(i, b)| {
                let row = &weights[i * self.state_dim..(i + 1) * self.state_dim];
                b + row.iter().zip(s).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    pub fn moments(&self, s: &[f64]) -> Result<Moments> {
        check_len("state", self.state_dim, s.len())?;
        let mean = self.affine(&self.mean_weights, &self.mean_bias, s);
        let pre = self.affine(&self.log_std_weights, &self.log_std_bias, s);
        let mut std = Vec::with_capacity(self.action_dim);
        let mut log_std = Vec::with_capacity(self.action_dim);
        let mut floored = Vec::with_capacity(self.action_dim);
        for l in pre {
            let sigma = l.exp();
            if sigma < SIGMA_FLOOR || sigma.is_nan() {
                std.push(SIGMA_FLOOR);
                log_std.push(SIGMA_FLOOR.ln());
                floored.push(true);
            } else {
                std.push(sigma);
                log_std.push(l);
                floored.push(false);
            }
        }
        Ok(Moments {
            mean,
            std,
            log_std,
            floored,
        })
    }

    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.moments(s)?.mean)
    }

    pub fn std(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.moments(s)?.std)
    }

    /// f(eps; s) = mu(s) + eps * sigma(s), componentwise.
    pub fn reparameterize(&self, s: &[f64], eps: &[f64]) -> Result<Action> {
        check_len("noise", self.action_dim, eps.len())?;
        check_finite("noise", eps)?;
        let m = self.moments(s)?;
        Ok(Action(
            m.mean
                .iter()
                .zip(&m.std)
                .zip(eps)
                .map(|((mu, sigma), e)| mu + e * sigma)
                .collect(),
        ))
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        check_len("action", self.action_dim, a.len())?;
        let m = self.moments(s)?;
        Ok(log_density(&m, a))
    }

    /// Log-density together with its parameter gradient at fixed `a`.
    pub fn log_prob_and_grad_params(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len("action", self.action_dim, a.len())?;
        let m = self.moments(s)?;
        let mut mean_seed = Vec::with_capacity(self.action_dim);
        let mut log_std_seed = Vec::with_capacity(self.action_dim);
        for i in 0..self.action_dim {
            let z = (a[i] - m.mean[i]) / m.std[i];
            mean_seed.push(z / m.std[i]);
            log_std_seed.push(if m.floored[i] { 0.0 } else { z * z - 1.0 });
        }
        Ok((
            log_density(&m, a),
            self.chain_params(s, &mean_seed, &log_std_seed),
        ))
    }

    /// Partial gradient of log pi(a|s) in the parameters with the action held fixed.
    pub fn grad_logprob_params(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_prob_and_grad_params(s, a)?.1)
    }

    pub fn grad_logprob_action(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_len("action", self.action_dim, a.len())?;
        let m = self.moments(s)?;
        Ok((0..self.action_dim)
            .map(|i| -(a[i] - m.mean[i]) / (m.std[i] * m.std[i]))
            .collect())
    }

    /// Jacobian of f(eps; s) in the parameters, shape `action_dim x param_count`.
    pub fn grad_f_params(&self, s: &[f64], eps: &[f64]) -> Result<Jacobian> {
        check_len("noise", self.action_dim, eps.len())?;
        let m = self.moments(s)?;
        let mut jac = Jacobian::zeros(self.action_dim, self.param_count());
        let (sd, ad) = (self.state_dim, self.action_dim);
        let (off_b, off_c, off_d) = (ad * sd, ad * sd + ad, 2 * ad * sd + ad);
        for i in 0..ad {
            let scale = m.std_slope(i) * eps[i];
            let row = jac.row_mut(i);
            for k in 0..sd {
                row[i * sd + k] = s[k];
                row[off_c + i * sd + k] = scale * s[k];
            }
            row[off_b + i] = 1.0;
            row[off_d + i] = scale;
        }
        Ok(jac)
    }

    /// Draws eps ~ N(0, I) and reparameterizes.
    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Action> {
        let eps = self.draw_noise(rng);
        self.reparameterize(s, &eps)
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.action_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    /// Maps per-component seeds d/d mu_i and d/d(pre log-std)_i through the affine layers.
    pub(crate) fn chain_params(
        &self,
        s: &[f64],
        mean_seed: &[f64],
        log_std_seed: &[f64],
    ) -> Vec<f64> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut g = vec![0.0; self.param_count()];
        let (off_b, off_c, off_d) = (ad * sd, ad * sd + ad, 2 * ad * sd + ad);
        for i in 0..ad {
            for k in 0..sd {
                g[i * sd + k] = mean_seed[i] * s[k];
                g[off_c + i * sd + k] = log_std_seed[i] * s[k];
            }
            g[off_b + i] = mean_seed[i];
            g[off_d + i] = log_std_seed[i];
        }
        g
    }
}

pub(crate) fn log_density(m: &Moments, a: &[f64]) -> f64 {
    m.mean
        .iter()
        .zip(&m.std)
        .zip(&m.log_std)
        .zip(a)
        .map(|(((mu, sigma), ls), x)| {
            let z = (x - mu) / sigma;
            -HALF_LN_2PI - ls - 0.5 * z * z
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn scalar(mean: f64, std: f64) -> GaussianPolicy {
        GaussianPolicy::constant(&[mean], &[std], 1).unwrap()
    }

    #[test]
    fn reparameterize_constant_policy() {
        let p = scalar(0.5, 2.0);
        let a = p.reparameterize(&[0.0], &[1.0]).unwrap();
        assert!((a[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn reparameterize_zero_noise_returns_mean() {
        let p = GaussianPolicy::new(
            2,
            2,
            vec![0.3, -0.2, 1.0, 0.5],
            vec![0.1, 0.2],
            vec![0.1; 4],
            vec![0.0; 2],
        )
        .unwrap();
        let s = [0.7, -1.3];
        assert_eq!(
            p.reparameterize(&s, &[0.0, 0.0]).unwrap().0,
            p.mean(&s).unwrap()
        );
    }

    #[test]
    fn reparameterize_affine_mean() {
        let p = GaussianPolicy::new(1, 1, vec![1.0], vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let a = p.reparameterize(&[2.0], &[-0.5]).unwrap();
        assert_eq!(a[0], 1.5);
    }

    #[test]
    fn reparameterize_rejects_bad_noise() {
        let p = scalar(0.0, 1.0);
        assert!(matches!(
            p.reparameterize(&[0.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(p.reparameterize(&[0.0, 1.0], &[1.0]).is_err());
        assert!(p.reparameterize(&[0.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn log_prob_values() {
        assert!(
            (scalar(0.0, 1.0).log_prob(&[0.0], &[0.0]).unwrap() + 0.918_938_533_204_672_7).abs()
                < 1e-12
        );
        let v = scalar(1.0, 2.0).log_prob(&[0.0], &[3.0]).unwrap();
        assert!((v + 2.112_085_713_764_618).abs() < 1e-12, "{v}");
    }

    #[test]
    fn score_seeds_at_unit_offset() {
        let g = scalar(0.0, 1.0)
            .grad_logprob_params(&[0.0], &[1.0])
            .unwrap();
        // layout [A, b, C, d]
        assert_eq!(g[1], 1.0);
        assert_eq!(g[3], 0.0);
    }

    #[test]
    fn score_mean_block_vanishes_at_mean() {
        let p = GaussianPolicy::new(
            2,
            1,
            vec![0.4, -0.1],
            vec![0.2, 0.3],
            vec![0.2, 0.1],
            vec![-0.3, 0.1],
        )
        .unwrap();
        let s = [1.5];
        let mu = p.mean(&s).unwrap();
        let g = p.grad_logprob_params(&s, &mu).unwrap();
        assert!(g[..4].iter().all(|v| *v == 0.0));
        assert_eq!(p.grad_logprob_action(&s, &mu).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn action_gradient_value() {
        let g = scalar(0.0, 1.0)
            .grad_logprob_action(&[0.0], &[2.0])
            .unwrap();
        assert_eq!(g, vec![-2.0]);
    }

    #[test]
    fn jacobian_rows() {
        let p = GaussianPolicy::new(1, 1, vec![0.2], vec![0.1], vec![0.0], vec![0.0]).unwrap();
        let j = p.grad_f_params(&[3.0], &[0.5]).unwrap();
        assert_eq!(j.row(0), &[3.0, 1.0, 1.5, 0.5]);
        let j0 = p.grad_f_params(&[3.0], &[0.0]).unwrap();
        assert_eq!(j0.row(0), &[3.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn jacobian_zero_noise_identity_b_block() {
        let p = GaussianPolicy::new(2, 3, vec![0.1; 6], vec![0.0; 2], vec![0.2; 6], vec![0.0; 2])
            .unwrap();
        let j = p.grad_f_params(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            let row = j.row(i);
            for k in 0..2 {
                assert_eq!(row[6 + k], if i == k { 1.0 } else { 0.0 });
            }
            assert!(row[8..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn floor_clamps_and_freezes_log_std_gradient() {
        let p = GaussianPolicy::new(1, 1, vec![0.0], vec![0.0], vec![0.0], vec![-40.0]).unwrap();
        let m = p.moments(&[1.0]).unwrap();
        assert_eq!(m.std[0], SIGMA_FLOOR);
        let a = [3e-7];
        let g = p.grad_logprob_params(&[1.0], &a).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        assert_eq!(g[2], 0.0);
        assert_eq!(g[3], 0.0);
        let j = p.grad_f_params(&[1.0], &[0.4]).unwrap();
        assert_eq!(&j.row(0)[2..], &[0.0, 0.0]);
    }

    #[test]
    fn flatten_roundtrip() {
        let p = GaussianPolicy::new(
            2,
            1,
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
            vec![7.0, 8.0],
        )
        .unwrap();
        let flat = p.params();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(p.with_params(&flat).unwrap(), p);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = scalar(1.0, 2.0);
        let a = p.sample(&[0.0], &mut rng_from_seed(9)).unwrap();
        let b = p.sample(&[0.0], &mut rng_from_seed(9)).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }
}
