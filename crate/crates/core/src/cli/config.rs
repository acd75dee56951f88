//! Run configuration: a JSON file whose every field is optional, merged with
//! per-command defaults and the `--seed` override.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::experiments::SweepBudget;
use crate::policies::{GaussianPolicy, Policy, StateBuffer};
use crate::quadrature::Grid;
use crate::targets::{MixtureLogQ, QuadraticQ, TargetQ};

pub const DEFAULT_SEED: u64 = 42;

/// `"unit"` (one all-zero state), a bare list of states, or `{"states": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BufferSpec {
    Named(String),
    List(Vec<Vec<f64>>),
    States { states: Vec<Vec<f64>> },
}

impl BufferSpec {
    pub fn build(&self, state_dim: usize) -> Result<StateBuffer> {
        match self {
            BufferSpec::Named(name) if name == "unit" => Ok(StateBuffer::unit(state_dim)),
            BufferSpec::Named(other) => Err(Error::Invalid(format!(
                "unknown buffer '{other}' (expected \"unit\")"
            ))),
            BufferSpec::List(states) | BufferSpec::States { states } => {
                StateBuffer::new(states.clone())
            }
        }
    }
}

/// Experiment knobs; each command reads the ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub replicas: Option<usize>,
    pub lr: Option<f64>,
    pub iters: Option<usize>,
    pub phi0: Option<f64>,
    pub k_list: Option<Vec<usize>>,
    pub batch: Option<usize>,
    pub steps: Option<usize>,
    pub grid: Option<Grid>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub estimator: Option<EstimatorKind>,
    pub common_random_numbers: Option<bool>,
    pub cases: Option<usize>,
    pub draws: Option<usize>,
    pub record_every: Option<usize>,
}

/// The config file as written by the user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub policy: Option<Policy>,
    pub target: Option<TargetQ>,
    pub buffer: Option<BufferSpec>,
    #[serde(default)]
    pub experiment: ExperimentFile,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))
    }
}

/// Policy, target and buffer after defaults, checked against each other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    pub policy: Policy,
    pub target: TargetQ,
    pub buffer: Vec<Vec<f64>>,
}

impl Problem {
    pub fn buffer(&self) -> StateBuffer {
        StateBuffer::new(self.buffer.clone()).expect("validated at resolution")
    }
}

fn default_states() -> Vec<Vec<f64>> {
    vec![vec![-1.0], vec![1.0]]
}

/// Default problem: a 1-D policy that exactly matches exp(Q)/Z at every state.
pub fn default_policy() -> Policy {
    GaussianPolicy::new(1, 1, vec![0.5], vec![0.3], vec![0.0], vec![0.0])
        .expect("valid default")
        .into()
}

pub fn default_target() -> TargetQ {
    QuadraticQ::new(1, vec![0.5], vec![0.3], 1.0)
        .expect("valid default")
        .into()
}

pub fn resolve_problem(file: &ConfigFile, default_target: TargetQ) -> Result<Problem> {
    let policy = file.policy.clone().unwrap_or_else(default_policy);
    let target = file.target.clone().unwrap_or(default_target);
    let buffer = match &file.buffer {
        Some(spec) => spec.build(policy.state_dim())?,
        None if policy.state_dim() == 1 => StateBuffer::new(default_states())?,
        None => StateBuffer::unit(policy.state_dim()),
    };
    if buffer.state_dim() != policy.state_dim() {
        return Err(Error::Invalid(format!(
            "buffer states have dimension {} but the policy expects {}",
            buffer.state_dim(),
            policy.state_dim()
        )));
    }
    if target.action_dim() != policy.action_dim() {
        return Err(Error::Invalid(format!(
            "target action_dim {} differs from policy action_dim {}",
            target.action_dim(),
            policy.action_dim()
        )));
    }
    if let Some(sd) = target.state_dim() {
        if sd != policy.state_dim() {
            return Err(Error::Invalid(format!(
                "target state_dim {sd} differs from policy state_dim {}",
                policy.state_dim()
            )));
        }
    }
    Ok(Problem {
        policy,
        target,
        buffer: buffer.states().to_vec(),
    })
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Invalid(format!(
            "{name} must be positive and finite (got {v})"
        )))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(Error::Invalid(format!(
            "{name} must be at least {min} (got {v})"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckGradConfig {
    pub seed: u64,
    pub cases: usize,
    pub draws: usize,
    #[serde(flatten)]
    pub problem: Problem,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlExampleConfig {
    pub seed: u64,
    pub lr: f64,
    pub iters: usize,
    pub phi0: f64,
    pub target: TargetQ,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceConfig {
    pub seed: u64,
    pub n_list: Vec<usize>,
    pub replicas: usize,
    pub estimators: Vec<EstimatorKind>,
    pub common_random_numbers: bool,
    #[serde(flatten)]
    pub problem: Problem,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub seed: u64,
    pub k_list: Vec<usize>,
    pub budget: SweepBudget,
    pub target: TargetQ,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeConfig {
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
    pub record_every: usize,
    #[serde(flatten)]
    pub problem: Problem,
}

fn seed(file: &ConfigFile, flag: Option<u64>) -> u64 {
    flag.or(file.seed).unwrap_or(DEFAULT_SEED)
}

impl CheckGradConfig {
    pub fn resolve(file: &ConfigFile, seed_flag: Option<u64>) -> Result<Self> {
        let e = &file.experiment;
        Ok(Self {
            seed: seed(file, seed_flag),
            cases: at_least("cases", e.cases.unwrap_or(100), 1)?,
            draws: at_least("draws", e.draws.unwrap_or(10), 1)?,
            problem: resolve_problem(file, default_target())?,
        })
    }
}

impl KlExampleConfig {
    pub fn resolve(file: &ConfigFile, seed_flag: Option<u64>) -> Result<Self> {
        let e = &file.experiment;
        let phi0 = e.phi0.unwrap_or(3.0);
        if !phi0.is_finite() {
            return Err(Error::Invalid("phi0 must be finite".into()));
        }
        Ok(Self {
            seed: seed(file, seed_flag),
            lr: positive("lr", e.lr.unwrap_or(0.5))?,
            iters: e.iters.unwrap_or(50),
            phi0,
            target: MixtureLogQ::canonical().into(),
        })
    }
}

impl VarianceConfig {
    pub fn resolve(file: &ConfigFile, seed_flag: Option<u64>) -> Result<Self> {
        let e = &file.experiment;
        let n_list = e
            .n_list
            .clone()
            .or(e.n.map(|n| vec![n]))
            .unwrap_or_else(|| vec![1, 10, 100]);
        if n_list.is_empty() || n_list.contains(&0) {
            return Err(Error::Invalid(
                "n_list must be non-empty with every n >= 1".into(),
            ));
        }
        let estimators = e
            .estimators
            .clone()
            .unwrap_or_else(|| EstimatorKind::ALL.to_vec());
        if estimators.is_empty() {
            return Err(Error::Invalid("estimators must not be empty".into()));
        }
        Ok(Self {
            seed: seed(file, seed_flag),
            n_list,
            replicas: at_least("replicas", e.replicas.unwrap_or(10_000), 2)?,
            estimators,
            common_random_numbers: e.common_random_numbers.unwrap_or(false),
            problem: resolve_problem(file, default_target())?,
        })
    }
}

impl SweepConfig {
    pub fn resolve(file: &ConfigFile, seed_flag: Option<u64>) -> Result<Self> {
        let e = &file.experiment;
        let k_list = e.k_list.clone().unwrap_or_else(|| vec![1, 2, 3]);
        if k_list.is_empty() || k_list.contains(&0) {
            return Err(Error::Invalid(
                "k_list must be non-empty with every K >= 1".into(),
            ));
        }
        let target = file
            .target
            .clone()
            .unwrap_or_else(|| MixtureLogQ::canonical().into());
        match &target {
            TargetQ::LogMixture(h) if h.action_dim() == 1 => {}
            _ => {
                return Err(Error::Invalid(
                    "mixture-sweep needs a 1-D log_mixture target".into(),
                ))
            }
        }
        let d = SweepBudget::default();
        Ok(Self {
            seed: seed(file, seed_flag),
            k_list,
            budget: SweepBudget {
                lr: positive("lr", e.lr.unwrap_or(d.lr))?,
                steps: e.steps.unwrap_or(d.steps),
                batch: at_least("batch", e.batch.unwrap_or(d.batch), 1)?,
            },
            target,
        })
    }
}

impl OptimizeConfig {
    pub fn resolve(file: &ConfigFile, seed_flag: Option<u64>) -> Result<Self> {
        let e = &file.experiment;
        let mut problem = resolve_problem(file, default_target())?;
        if file.policy.is_none() {
            // Start away from the optimum so the trace shows descent.
            problem.policy = GaussianPolicy::new(1, 1, vec![0.0], vec![0.0], vec![0.0], vec![0.5])
                .expect("valid start")
                .into();
        }
        let estimator = e.estimator.unwrap_or(match problem.policy {
            Policy::Gaussian(_) => EstimatorKind::Reparam,
            Policy::Mixture(_) => EstimatorKind::ScoreFn,
        });
        let iters = e.iters.unwrap_or(1000);
        Ok(Self {
            seed: seed(file, seed_flag),
            estimator,
            lr: positive("lr", e.lr.unwrap_or(0.05))?,
            iters,
            batch: at_least("batch", e.batch.unwrap_or(64), 1)?,
            record_every: at_least("record_every", e.record_every.unwrap_or(10), 1)?,
            problem,
        })
    }
}
