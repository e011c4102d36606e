//! Exact verification on small finite-horizon MDPs.

pub mod dual;
pub mod exact;
mod feasibility;
pub mod harness;
mod mdp;

pub use dual::{check_dual_bound, dual_function, dual_optimum, DeterministicPolicy, DualBoundCheck, DualResult};
pub use exact::{
    analytic_safety_grad, enumerate_trajectories, exact_estimator_expectation, exact_safety_prob, exact_value,
    exact_vc, finite_diff_grad, verify_recursion, EstimatorKind, RecursionCheck, Target, VcScale,
};
pub use feasibility::{feasibility_verdict, FeasibilityVerdict};
pub use mdp::{policy_from_text, policy_to_text, InstanceShape, TabularMdp};
