use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Per-coordinate streaming mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for j in 0..self.mean.len() {
            let delta = other.mean[j] - self.mean[j];
            self.mean[j] += delta * nb / n;
            self.m2[j] += other.m2[j] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn finish(&self) -> Result<EstimatorStats> {
        if self.count < 2 {
            return Err(Error::Invalid("statistics need at least 2 replicas".into()));
        }
        let variance: Vec<f64> = self
            .m2
            .iter()
            .map(|s| (s / (self.count - 1) as f64).max(0.0))
            .collect();
        let stderr = variance
            .iter()
            .map(|v| (v / self.count as f64).sqrt())
            .collect();
        Ok(EstimatorStats {
            mean: self.mean.clone(),
            cov_trace: variance.iter().sum(),
            variance,
            stderr,
            replicas: self.count,
        })
    }
}

/// Replica statistics of a gradient estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub mean: Vec<f64>,
    /// Unbiased per-coordinate sample variance.
    pub variance: Vec<f64>,
    /// Sum of `variance`: the trace of the estimator covariance.
    pub cov_trace: f64,
    pub stderr: Vec<f64>,
    pub replicas: usize,
}

impl EstimatorStats {
    pub fn from_samples<'a, I>(dim: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut acc = Accumulator::new(dim);
        for s in samples {
            check_len("sample", dim, s.len())?;
            acc.push(s);
        }
        acc.finish()
    }

    /// Coordinates where `|self.mean - other.mean| <= k * sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &EstimatorStats, k: f64) -> Vec<bool> {
        self.mean
            .iter()
            .zip(&other.mean)
            .zip(self.stderr.iter().zip(&other.stderr))
            .map(|((a, b), (sa, sb))| (a - b).abs() <= k * (sa * sa + sb * sb).sqrt())
            .collect()
    }
}
