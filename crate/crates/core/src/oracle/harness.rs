//! Randomized verification sweeps over small tabular instances.

use crate::error::Result;
use crate::grad::{relative_error, GradientVector};
use crate::oracle::dual::{check_dual_bound_from, dual_optimum, DualResult};
use crate::oracle::exact::{
    analytic_safety_grad, exact_estimator_expectation, finite_diff_grad, verify_recursion, EstimatorKind, Target,
    VcScale,
};
use crate::oracle::feasibility::{feasibility_verdict, FeasibilityVerdict};
use crate::oracle::mdp::{InstanceShape, TabularMdp};
use crate::policy::SoftmaxTabularPolicy;
use crate::rng::RngStream;

/// Estimator gradients must match finite differences to this relative error.
pub const ESTIMATOR_TOL: f64 = 1e-6;
/// Absolute tolerance for the one-step gradient recursion.
pub const RECURSION_TOL: f64 = 1e-9;
/// Tolerance of the dual-bound slack, monotonicity and concavity checks.
pub const DUAL_TOL: f64 = 1e-9;
/// Largest accepted `|P̃⋆ − D̃⋆|`.
pub const GAP_TOL: f64 = 1e-8;

/// Gradients smaller than this in every entry are compared absolutely.
const GRAD_FLOOR: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
const POLICY_SCALE: f64 = 1.0;

// Stream-id offsets keep instance families disjoint under one seed.
const GRADCHECK_STREAMS: u64 = 1 << 32;
const FEASIBILITY_STREAMS: u64 = 2 << 32;
const DUAL_STREAMS: u64 = 3 << 32;

/// Random instance with a random softmax policy having one stage per step.
pub fn random_instance(rng: &mut RngStream) -> (TabularMdp, SoftmaxTabularPolicy) {
    let mdp = TabularMdp::random(rng, InstanceShape::default());
    let policy = SoftmaxTabularPolicy::random(mdp.n_states(), mdp.n_actions(), mdp.horizon(), POLICY_SCALE, rng);
    (mdp, policy)
}

pub fn gradcheck_instance(seed: u64, index: usize) -> (TabularMdp, SoftmaxTabularPolicy) {
    random_instance(&mut RngStream::new(seed, GRADCHECK_STREAMS + index as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub index: usize,
    pub n_states: usize,
    pub horizon: usize,
    /// Exact estimator expectation against finite differences of `P(all safe)`.
    pub estimator_rel_err: f64,
    /// Exact estimator expectation against the forward-mode gradient.
    pub analytic_rel_err: f64,
    /// Largest recursion mismatch over every valid `t`.
    pub recursion_max_diff: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.estimator_rel_err < ESTIMATOR_TOL
            && self.analytic_rel_err < ESTIMATOR_TOL
            && self.recursion_max_diff < RECURSION_TOL
    }
}

/// Runs every gradient check on one instance. `corrupt` perturbs the
/// estimator and exists only as a negative control.
pub fn check_gradients(
    index: usize,
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    corrupt: bool,
) -> Result<GradcheckReport> {
    let mut estimate = exact_estimator_expectation(mdp, policy, EstimatorKind::Safety)?;
    if corrupt {
        estimate.scale(1.05);
    }
    let fd = finite_diff_grad(mdp, policy, Target::SafetyProb, FD_STEP)?;
    let analytic: GradientVector = analytic_safety_grad(mdp, policy)?;
    let mut recursion_max_diff: f64 = 0.0;
    for t in 1..mdp.horizon() {
        recursion_max_diff = recursion_max_diff.max(verify_recursion(mdp, policy, t)?.max_abs_diff);
    }
    Ok(GradcheckReport {
        index,
        n_states: mdp.n_states(),
        horizon: mdp.horizon(),
        estimator_rel_err: relative_error(&estimate, &fd, GRAD_FLOOR)?,
        analytic_rel_err: relative_error(&estimate, &analytic, GRAD_FLOOR)?,
        recursion_max_diff,
    })
}

/// One sampled `(mdp, policy, δ)` triple and its verdict.
#[derive(Debug, Clone)]
pub struct FeasibilitySample {
    pub index: usize,
    pub mdp: TabularMdp,
    pub policy: SoftmaxTabularPolicy,
    pub verdict: FeasibilityVerdict,
}

impl FeasibilitySample {
    pub fn violated(&self) -> bool {
        !self.verdict.inclusions_hold() || !self.verdict.markov_step_holds(DUAL_TOL)
    }
}

/// `δ` is log-uniform on `[10⁻⁴, 1]` so that small budgets, where `F̂` is
/// nonempty, are well represented.
pub fn feasibility_sample(seed: u64, index: usize) -> Result<FeasibilitySample> {
    let mut rng = RngStream::new(seed, FEASIBILITY_STREAMS + index as u64);
    let (mdp, policy) = random_instance(&mut rng);
    let delta = 10f64.powf(-4.0 * rng.uniform());
    let verdict = feasibility_verdict(&mdp, &policy, delta)?;
    Ok(FeasibilitySample {
        index,
        mdp,
        policy,
        verdict,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilitySummary {
    pub samples: usize,
    pub in_f_hat: usize,
    pub in_f: usize,
    pub in_f_bar: usize,
    pub inclusion_violations: usize,
    pub markov_violations: usize,
    /// First offending sample, if any.
    pub first_violation: Option<usize>,
}

pub fn feasibility_sweep(seed: u64, samples: usize) -> Result<(FeasibilitySummary, Option<FeasibilitySample>)> {
    let mut summary = FeasibilitySummary {
        samples,
        ..Default::default()
    };
    let mut counterexample = None;
    for i in 0..samples {
        let sample = feasibility_sample(seed, i)?;
        let v = &sample.verdict;
        summary.in_f_hat += v.in_f_hat as usize;
        summary.in_f += v.in_f as usize;
        summary.in_f_bar += v.in_f_bar as usize;
        summary.inclusion_violations += !v.inclusions_hold() as usize;
        summary.markov_violations += !v.markov_step_holds(DUAL_TOL) as usize;
        if sample.violated() && counterexample.is_none() {
            summary.first_violation = Some(i);
            counterexample = Some(sample);
        }
    }
    Ok((summary, counterexample))
}

/// `n` evenly spaced points on `[0, 1]`, endpoints exact.
pub fn xi_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn dual_instance(seed: u64, index: usize) -> TabularMdp {
    let mut rng = RngStream::new(seed, DUAL_STREAMS + index as u64);
    TabularMdp::random(&mut rng, InstanceShape::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    pub index: usize,
    pub results: Vec<DualResult>,
    /// Smallest slack of the bound over all feasible `(ξ₀, ξ₁)` pairs.
    pub min_slack: f64,
    pub max_gap: f64,
    /// Largest increase of `P̃⋆` between consecutive feasible grid points.
    pub max_increase: f64,
    /// Largest midpoint-concavity violation over consecutive feasible triples.
    pub max_concavity_violation: f64,
    pub infeasible_points: usize,
}

impl DualReport {
    pub fn passed(&self) -> bool {
        self.min_slack >= -DUAL_TOL
            && self.max_gap < GAP_TOL
            && self.max_increase <= DUAL_TOL
            && self.max_concavity_violation <= DUAL_TOL
    }
}

pub fn check_dual(index: usize, mdp: &TabularMdp, grid: &[f64], lambda_max: f64, scale: VcScale) -> Result<DualReport> {
    let results = grid
        .iter()
        .map(|&xi| dual_optimum(mdp, xi, lambda_max, scale))
        .collect::<Result<Vec<_>>>()?;
    let feasible: Vec<&DualResult> = results.iter().filter(|r| r.feasible).collect();
    let mut min_slack = f64::INFINITY;
    for a in &feasible {
        for b in &feasible {
            min_slack = min_slack.min(check_dual_bound_from((*a).clone(), (*b).clone())?.slack);
        }
    }
    let max_gap = feasible.iter().map(|r| r.duality_gap().abs()).fold(0.0, f64::max);
    let max_increase = feasible
        .windows(2)
        .map(|w| w[1].p_tilde_star - w[0].p_tilde_star)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let max_concavity_violation = feasible
        .windows(3)
        .map(|w| 0.5 * (w[0].p_tilde_star + w[2].p_tilde_star) - w[1].p_tilde_star)
        .fold(0.0, f64::max);
    Ok(DualReport {
        index,
        infeasible_points: results.len() - feasible.len(),
        results,
        min_slack,
        max_gap,
        max_increase,
        max_concavity_violation,
    })
}
