//! Exhaustive enumeration and exact expectations on tabular MDPs.

use crate::error::{Error, Result};
use crate::estimators::{grad_safety_prob, grad_value};
use crate::grad::GradientVector;
use crate::oracle::TabularMdp;
use crate::policy::{ScoreFunction, SoftmaxTabularPolicy};
use crate::trajectory::{SafetyBonus, Trajectory};

/// Most state-action paths an exact computation may visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

pub type TabularTrajectory = Trajectory<usize, usize>;

fn check_shapes(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Config(format!(
            "policy is {}x{} but the MDP has {} states and {} actions",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

fn check_guard(mdp: &TabularMdp, steps: usize) -> Result<()> {
    let paths = ((mdp.n_states() * mdp.n_actions()) as f64).powi(steps as i32);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            paths,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Depth-first walk over every positive-probability continuation from
/// `start` at stage `t0` to the horizon. The visitor sees the visited states
/// (`T - t0 + 1` of them), the actions, and the path probability.
pub(crate) fn walk_from(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    start: usize,
    t0: usize,
    visit: &mut impl FnMut(&[usize], &[usize], f64),
) {
    fn recurse(
        mdp: &TabularMdp,
        policy: &SoftmaxTabularPolicy,
        t: usize,
        prob: f64,
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize], &[usize], f64),
    ) {
        if t == mdp.horizon() {
            visit(states, actions, prob);
            return;
        }
        let s = *states.last().expect("path has a state");
        for (a, pa) in policy.probs(s, t).into_iter().enumerate() {
            actions.push(a);
            for (next, ps) in mdp.next_dist(s, a).iter().enumerate() {
                if *ps == 0.0 {
                    continue;
                }
                states.push(next);
                recurse(mdp, policy, t + 1, prob * pa * ps, states, actions, visit);
                states.pop();
            }
            actions.pop();
        }
    }
    let mut states = vec![start];
    let mut actions = Vec::new();
    recurse(mdp, policy, t0, 1.0, &mut states, &mut actions, visit);
}

/// Every trajectory from `s0` with its probability
/// `Π π(a_t|s_t,t) Pr(s_{t+1}|s_t,a_t)`.
pub fn enumerate_trajectories(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
) -> Result<Vec<(TabularTrajectory, f64)>> {
    check_shapes(mdp, policy)?;
    check_guard(mdp, mdp.horizon())?;
    let mut out = Vec::new();
    walk_from(mdp, policy, mdp.s0(), 0, &mut |states, actions, prob| {
        let rewards = states.iter().zip(actions).map(|(&s, &a)| mdp.reward(s, a)).collect();
        let flags = states.iter().map(|&s| mdp.is_safe(s)).collect();
        let traj = Trajectory::new(states.to_vec(), actions.to_vec(), rewards, flags).expect("consistent path");
        out.push((traj, prob));
    });
    Ok(out)
}

/// `Σ_τ Pr(τ) f(τ)`.
pub fn expectation(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    f: impl Fn(&TabularTrajectory) -> f64,
) -> Result<f64> {
    Ok(enumerate_trajectories(mdp, policy)?
        .iter()
        .map(|(traj, p)| p * f(traj))
        .sum())
}

/// `P(S_t ∈ S_safe for t = 0..=T)`.
pub fn exact_safety_prob(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<f64> {
    expectation(mdp, policy, |t| if t.jointly_safe() { 1.0 } else { 0.0 })
}

/// `E[Σ_t r_μ]` under the same return convention as the estimators.
pub fn exact_value(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy, bonus: SafetyBonus) -> Result<f64> {
    expectation(mdp, policy, |t| t.reward_to_go(0, bonus).expect("horizon >= 1"))
}

/// Convention for the cumulative safety value `V_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VcScale {
    /// `E[(1/(T+1)) Σ_{t=0}^{T} 𝟙(S_t ∈ S_safe)]`
    #[default]
    Normalized,
    /// `E[Σ_{t=0}^{T} 𝟙(S_t ∈ S_safe)]`
    Count,
}

impl VcScale {
    pub fn factor(self, horizon: usize) -> f64 {
        match self {
            VcScale::Normalized => 1.0 / (horizon + 1) as f64,
            VcScale::Count => 1.0,
        }
    }
}

pub fn exact_vc(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy, scale: VcScale) -> Result<f64> {
    let factor = scale.factor(mdp.horizon());
    expectation(mdp, policy, |t| {
        factor * t.safe_flags().iter().filter(|&&b| b).count() as f64
    })
}

/// Which single-trajectory estimator to average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Safety,
    Value(SafetyBonus),
}

/// `Σ_τ Pr(τ) · estimator(τ)`.
pub fn exact_estimator_expectation(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    which: EstimatorKind,
) -> Result<GradientVector> {
    let mut out = policy.zero_gradient();
    for (traj, p) in enumerate_trajectories(mdp, policy)? {
        let g = match which {
            EstimatorKind::Safety => grad_safety_prob(&traj, policy)?,
            EstimatorKind::Value(bonus) => grad_value(&traj, policy, bonus),
        };
        out.axpy(p, &g)?;
    }
    Ok(out)
}

/// Scalar objective differentiated by [`finite_diff_grad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    SafetyProb,
    Value(SafetyBonus),
    Vc(VcScale),
}

pub fn exact_target(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy, target: Target) -> Result<f64> {
    match target {
        Target::SafetyProb => exact_safety_prob(mdp, policy),
        Target::Value(bonus) => exact_value(mdp, policy, bonus),
        Target::Vc(scale) => exact_vc(mdp, policy, scale),
    }
}

/// Central differences of the exact target over every logit.
pub fn finite_diff_grad(
    mdp: &TabularMdp,
    policy: &SoftmaxTabularPolicy,
    target: Target,
    h: f64,
) -> Result<GradientVector> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Precondition(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }
    check_shapes(mdp, policy)?;
    check_guard(mdp, mdp.horizon())?;
    let mut out = policy.zero_gradient();
    let mut probe = policy.clone();
    for i in 0..out.len() {
        let base = policy.logits()[i];
        probe.logits_mut()[i] = base + h;
        let up = exact_target(mdp, &probe, target)?;
        probe.logits_mut()[i] = base - h;
        let down = exact_target(mdp, &probe, target)?;
        probe.logits_mut()[i] = base;
        out[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Per-stage conditional safety probabilities and their gradients.
pub type TailRecursion = (Vec<Vec<f64>>, Vec<Vec<GradientVector>>);

/// `E[G_t | S_{t-1} = s]` for every `s`, differentiated in forward mode.
///
/// Returns `(q, dq)` where `q[u][s] = E[G_{u+1} | S_u = s]` for
/// `u = 0..T-1` and `dq[u][s]` is its exact gradient, obtained by the product
/// rule on the backward recursion rather than by likelihood ratios.
pub fn tail_safety_recursion(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<TailRecursion> {
    check_shapes(mdp, policy)?;
    let (n_s, horizon) = (mdp.n_states(), mdp.horizon());
    let zero = policy.zero_gradient();
    // h[s] = E[G_{u+1} | S_{u+1} = s], starting from G_T = b_T
    let mut h: Vec<f64> = (0..n_s).map(|s| if mdp.is_safe(s) { 1.0 } else { 0.0 }).collect();
    let mut dh: Vec<GradientVector> = vec![zero.clone(); n_s];
    let mut q = vec![Vec::new(); horizon];
    let mut dq = vec![Vec::new(); horizon];
    for u in (0..horizon).rev() {
        let mut qu = vec![0.0; n_s];
        let mut dqu = vec![zero.clone(); n_s];
        for s in 0..n_s {
            for (a, pa) in policy.probs(s, u).into_iter().enumerate() {
                let dist = mdp.next_dist(s, a);
                let cont: f64 = dist.iter().zip(&h).map(|(p, v)| p * v).sum();
                qu[s] += pa * cont;
                // ∇π(a|s,u) = π(a|s,u) ∇log π(a|s,u)
                policy.add_score(&s, &a, u, pa * cont, &mut dqu[s]);
                for (next, p) in dist.iter().enumerate() {
                    if *p != 0.0 {
                        dqu[s].axpy(pa * p, &dh[next])?;
                    }
                }
            }
        }
        h = (0..n_s).map(|s| if mdp.is_safe(s) { qu[s] } else { 0.0 }).collect();
        dh = (0..n_s)
            .map(|s| if mdp.is_safe(s) { dqu[s].clone() } else { zero.clone() })
            .collect();
        q[u] = qu;
        dq[u] = dqu;
    }
    Ok((q, dq))
}

/// Exact `∇_θ P(all safe)` by forward-mode differentiation of the backward
/// recursion; independent of both the estimator and finite differences.
pub fn analytic_safety_grad(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy) -> Result<GradientVector> {
    let (_, dq) = tail_safety_recursion(mdp, policy)?;
    Ok(dq[0][mdp.s0()].clone())
}

/// Both sides of the one-step gradient recursion at one safe `S_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionRow {
    pub state: usize,
    pub lhs: GradientVector,
    pub rhs: GradientVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionCheck {
    pub t: usize,
    pub rows: Vec<RecursionRow>,
    pub max_abs_diff: f64,
}

/// Checks, for every safe `S_{t-1} = s`,
/// `∇E[G_t|s] = E[∇E[G_{t+1}|S_t] 𝟙(S_t safe) | s] + E[G_t ∇log π(A_{t-1}|s) | s]`.
///
/// The left side comes from forward-mode differentiation; the second term
/// on the right is an enumeration over continuations from `s`.
pub fn verify_recursion(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy, t: usize) -> Result<RecursionCheck> {
    let horizon = mdp.horizon();
    if t < 1 || t + 1 > horizon {
        return Err(Error::Range {
            what: "recursion stage",
            index: t,
            max: horizon.saturating_sub(1),
        });
    }
    check_guard(mdp, horizon - (t - 1))?;
    let (_, dq) = tail_safety_recursion(mdp, policy)?;
    let mut rows = Vec::new();
    let mut max_abs_diff: f64 = 0.0;
    for s in (0..mdp.n_states()).filter(|&s| mdp.is_safe(s)) {
        let lhs = dq[t - 1][s].clone();

        let mut rhs = policy.zero_gradient();
        for (a, pa) in policy.probs(s, t - 1).into_iter().enumerate() {
            for (next, p) in mdp.next_dist(s, a).iter().enumerate() {
                if *p != 0.0 && mdp.is_safe(next) {
                    rhs.axpy(pa * p, &dq[t][next])?;
                }
            }
        }
        walk_from(mdp, policy, s, t - 1, &mut |states, actions, prob| {
            // states[0] = S_{t-1}; G_t covers states[1..]
            if states[1..].iter().all(|&x| mdp.is_safe(x)) {
                policy.add_score(&states[0], &actions[0], t - 1, prob, &mut rhs);
            }
        });

        max_abs_diff = max_abs_diff.max(lhs.max_abs_diff(&rhs)?);
        rows.push(RecursionRow { state: s, lhs, rhs });
    }
    Ok(RecursionCheck { t, rows, max_abs_diff })
}
