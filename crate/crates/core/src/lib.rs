//! Policy-gradient learning under joint probabilistic safety constraints.
//!
//! The crate provides
//!
//! * the trajectory model and safety-indicator algebra ([`trajectory`]),
//! * a 2-D navigation benchmark with circular obstacles ([`env`]),
//! * Gaussian-RBF and tabular softmax policies ([`policy`]),
//! * the safe-probability, value and Lagrangian gradient estimators
//!   ([`estimators`]),
//! * an exact tabular oracle that checks estimator unbiasedness, the
//!   gradient recursion, feasible-set inclusions and the dual bound
//!   ([`oracle`]),
//! * training loops for the probabilistic and cumulative formulations
//!   ([`trainer`]) and the evaluation/Pareto sweep harness ([`sweep`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod estimators;
pub mod grad;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod sweep;
pub mod trainer;
pub mod trajectory;

pub use env::{NavEnvConfig, NavPolicy, Obstacle, Point};
pub use error::{Error, Result};
pub use grad::GradientVector;
pub use policy::{RbfGaussianPolicy, RbfLattice, ScoreFunction, SoftmaxTabularPolicy};
pub use rng::RngStream;
pub use trajectory::{augmented_reward, SafetyBonus, Trajectory};
