//! Replicated gradient estimates and their statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{Accumulator, EstimatorStats};
use crate::error::{Error, Result};
use crate::estimators::{grad_batch, EstimatorKind, GradEstimate};
use crate::policies::{Policy, StateBuffer};
use crate::rng::derive_seed;
use crate::targets::TargetQ;

/// Replicas per parallel work unit. Fixed so reductions do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Draws averaged inside each estimate.
    pub n: usize,
    /// Number of independent estimates.
    pub replicas: usize,
    pub seed: u64,
    /// Share replica seeds (hence state and noise streams) across estimator kinds.
    #[serde(default)]
    pub common_random_numbers: bool,
}

/// Root seed of replica `r`. With common random numbers both kinds get the same seed.
pub fn replica_seed(kind: EstimatorKind, config: &StudyConfig, replica: usize) -> u64 {
    let root = if config.common_random_numbers {
        config.seed
    } else {
        derive_seed(config.seed, kind.tag())
    };
    derive_seed(derive_seed(root, config.n as u64), replica as u64)
}

fn validate(kind: EstimatorKind, policy: &Policy, config: &StudyConfig) -> Result<()> {
    if config.replicas < 2 {
        return Err(Error::Invalid(
            "variance study needs at least 2 replicas".into(),
        ));
    }
    if config.n == 0 {
        return Err(Error::Invalid("variance study needs n >= 1".into()));
    }
    if kind == EstimatorKind::Reparam {
        policy.as_gaussian()?;
    }
    Ok(())
}

/// All replica estimates, in replica order.
pub fn replica_estimates(
    kind: EstimatorKind,
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    config: &StudyConfig,
) -> Result<Vec<GradEstimate>> {
    validate(kind, policy, config)?;
    (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            grad_batch(
                kind,
                policy,
                q,
                buffer,
                config.n,
                replica_seed(kind, config, r),
            )
        })
        .collect()
}

/// Mean, variance and standard errors over `config.replicas` independent `n`-draw estimates.
pub fn variance_study(
    kind: EstimatorKind,
    policy: &Policy,
    q: &TargetQ,
    buffer: &StateBuffer,
    config: &StudyConfig,
) -> Result<EstimatorStats> {
    validate(kind, policy, config)?;
    let dim = policy.param_count();
    let chunks = config.replicas.div_ceil(CHUNK);
    let partials: Vec<Accumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(dim);
            for r in c * CHUNK..((c + 1) * CHUNK).min(config.replicas) {
                let est = grad_batch(
                    kind,
                    policy,
                    q,
                    buffer,
                    config.n,
                    replica_seed(kind, config, r),
                )?;
                acc.push(&est.g);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = Accumulator::new(dim);
    for p in &partials {
        total.merge(p);
    }
    total.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{GaussianPolicy, MixturePolicy};
    use crate::targets::QuadraticQ;

    fn setup() -> (Policy, TargetQ, StateBuffer) {
        (
            GaussianPolicy::new(1, 1, vec![0.2], vec![0.1], vec![0.1], vec![-0.2])
                .unwrap()
                .into(),
            QuadraticQ::new(1, vec![0.5], vec![0.3], 1.0)
                .unwrap()
                .into(),
            StateBuffer::new(vec![vec![-1.0], vec![0.5], vec![1.0]]).unwrap(),
        )
    }

    #[test]
    fn bit_identical_across_runs_and_thread_counts() {
        let (p, q, b) = setup();
        let cfg = StudyConfig {
            n: 4,
            replicas: 1000,
            seed: 42,
            common_random_numbers: false,
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        for kind in EstimatorKind::ALL {
            let a = one
                .install(|| variance_study(kind, &p, &q, &b, &cfg))
                .unwrap();
            let c = four
                .install(|| variance_study(kind, &p, &q, &b, &cfg))
                .unwrap();
            let d = variance_study(kind, &p, &q, &b, &cfg).unwrap();
            assert_eq!(a, c);
            assert_eq!(a, d);
            let ra = one
                .install(|| replica_estimates(kind, &p, &q, &b, &cfg))
                .unwrap();
            let rc = four
                .install(|| replica_estimates(kind, &p, &q, &b, &cfg))
                .unwrap();
            assert_eq!(ra, rc);
        }
    }

    #[test]
    fn stats_match_replica_list() {
        let (p, q, b) = setup();
        let cfg = StudyConfig {
            n: 3,
            replicas: 600,
            seed: 1,
            common_random_numbers: false,
        };
        let st = variance_study(EstimatorKind::ScoreFn, &p, &q, &b, &cfg).unwrap();
        let reps = replica_estimates(EstimatorKind::ScoreFn, &p, &q, &b, &cfg).unwrap();
        let direct =
            EstimatorStats::from_samples(p.param_count(), reps.iter().map(|e| e.g.as_slice()))
                .unwrap();
        for j in 0..p.param_count() {
            assert!((st.mean[j] - direct.mean[j]).abs() < 1e-12 * (1.0 + direct.mean[j].abs()));
            assert!(
                (st.variance[j] - direct.variance[j]).abs() < 1e-10 * (1.0 + direct.variance[j])
            );
        }
        assert_eq!(st.replicas, 600);
    }

    #[test]
    fn common_random_numbers_share_seeds() {
        let cfg = StudyConfig {
            n: 1,
            replicas: 2,
            seed: 5,
            common_random_numbers: true,
        };
        assert_eq!(
            replica_seed(EstimatorKind::Reparam, &cfg, 1),
            replica_seed(EstimatorKind::ScoreFn, &cfg, 1)
        );
        let cfg = StudyConfig {
            common_random_numbers: false,
            ..cfg
        };
        assert_ne!(
            replica_seed(EstimatorKind::Reparam, &cfg, 1),
            replica_seed(EstimatorKind::ScoreFn, &cfg, 1)
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let (p, q, b) = setup();
        let cfg = StudyConfig {
            n: 1,
            replicas: 1,
            seed: 0,
            common_random_numbers: false,
        };
        assert!(variance_study(EstimatorKind::Reparam, &p, &q, &b, &cfg).is_err());
        let m: Policy =
            MixturePolicy::single(GaussianPolicy::constant(&[0.0], &[1.0], 1).unwrap()).into();
        let cfg = StudyConfig {
            replicas: 10,
            ..cfg
        };
        assert!(matches!(
            variance_study(EstimatorKind::Reparam, &m, &q, &b, &cfg),
            Err(Error::UnsupportedReparameterization)
        ));
        assert!(variance_study(EstimatorKind::ScoreFn, &m, &q, &b, &cfg).is_ok());
    }
}
