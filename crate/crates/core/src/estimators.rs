//! Single-trajectory likelihood-ratio gradient estimators.
//!
//! * [`grad_safety_prob`]: `G_1 · Σ_t ∇log π(A_t|S_t)`, an unbiased estimate
//!   of `∇_θ P(S_t ∈ S_safe ∀t)` given a safe initial state.
//! * [`grad_value`]: reward-to-go REINFORCE on the (optionally
//!   safety-augmented) reward.
//! * [`grad_lagrangian`]: value gradient plus `λ` times the safety gradient.

use crate::error::{Error, Result};
use crate::grad::GradientVector;
use crate::policy::ScoreFunction;
use crate::trajectory::{SafetyBonus, Trajectory};

fn require_safe_start<S, A>(traj: &Trajectory<S, A>) -> Result<()> {
    if traj.safe_flags()[0] {
        Ok(())
    } else {
        Err(Error::Precondition(
            "the safety-probability gradient needs a safe initial state".into(),
        ))
    }
}

/// Adds `weight · G_1 · Σ_t score_t` into `out`.
fn add_safety_term<S, A, P>(traj: &Trajectory<S, A>, policy: &P, weight: f64, out: &mut GradientVector)
where
    P: ScoreFunction<S, A> + ?Sized,
{
    if weight == 0.0 || !traj.safe_flags()[1..].iter().all(|&b| b) {
        return;
    }
    for (t, (s, a)) in traj.states().iter().zip(traj.actions()).enumerate() {
        policy.add_score(s, a, t, weight, out);
    }
}

pub fn grad_safety_prob<S, A, P>(traj: &Trajectory<S, A>, policy: &P) -> Result<GradientVector>
where
    P: ScoreFunction<S, A> + ?Sized,
{
    require_safe_start(traj)?;
    let mut out = policy.zero_gradient();
    add_safety_term(traj, policy, 1.0, &mut out);
    Ok(out)
}

/// `Σ_t (R_{t,μ} − baseline) · ∇log π(A_t|S_t)`.
pub fn grad_value_with_baseline<S, A, P>(
    traj: &Trajectory<S, A>,
    policy: &P,
    bonus: SafetyBonus,
    baseline: f64,
) -> GradientVector
where
    P: ScoreFunction<S, A> + ?Sized,
{
    let mut out = policy.zero_gradient();
    let to_go = traj.rewards_to_go(bonus);
    for (t, ((s, a), r)) in traj.states().iter().zip(traj.actions()).zip(to_go).enumerate() {
        let w = r - baseline;
        if w != 0.0 {
            policy.add_score(s, a, t, w, &mut out);
        }
    }
    out
}

pub fn grad_value<S, A, P>(traj: &Trajectory<S, A>, policy: &P, bonus: SafetyBonus) -> GradientVector
where
    P: ScoreFunction<S, A> + ?Sized,
{
    grad_value_with_baseline(traj, policy, bonus, 0.0)
}

pub fn grad_lagrangian<S, A, P>(traj: &Trajectory<S, A>, policy: &P, lambda: f64) -> Result<GradientVector>
where
    P: ScoreFunction<S, A> + ?Sized,
{
    require_safe_start(traj)?;
    let mut out = grad_value(traj, policy, SafetyBonus::NONE);
    add_safety_term(traj, policy, lambda, &mut out);
    Ok(out)
}

pub fn batch_average(grads: &[GradientVector]) -> Result<GradientVector> {
    let first = grads
        .first()
        .ok_or_else(|| Error::Precondition("cannot average an empty batch".into()))?;
    let mut out = first.clone();
    for g in &grads[1..] {
        out.axpy(1.0, g)?;
    }
    out.scale(1.0 / grads.len() as f64);
    Ok(out)
}
