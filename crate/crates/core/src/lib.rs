//! Analytic laboratory for the soft actor-critic actor loss.
//!
//! Policies are affine-in-state diagonal Gaussians (or mixtures of them),
//! critics are toy Q-functions with known normalizers, and every derivative
//! is written out by hand. The crate provides the Monte Carlo and quadrature
//! versions of the loss, the reparameterized and score-function gradient
//! estimators, finite-difference oracles for all of them, and three studies:
//! a forward-KL bimodal example, a mixture-size sweep and an estimator
//! variance comparison. The [`cli`] module drives them from JSON configs.
//!
//! All arithmetic is `f64`; every random stream is a seeded ChaCha8 generator.

#![forbid(unsafe_code)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod policies;
pub mod quadrature;
pub mod rng;
pub mod targets;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, GradEstimate, LossEstimate};
pub use policies::{Action, GaussianPolicy, MixturePolicy, Policy, StateBuffer};
pub use targets::{MixtureLogQ, QuadraticQ, TargetQ};
