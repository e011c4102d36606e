use crate::error::{Error, Result};
use crate::oracle::exact::enumerate_trajectories;
use crate::oracle::TabularMdp;
use crate::policy::SoftmaxTabularPolicy;

/// Membership of one policy in the three nested feasible sets.
///
/// * `F̂`: `E[Σ_t 𝟙(S_t unsafe)] ≤ δ` (union-bound surrogate)
/// * `F`: `P(all safe) ≥ 1 − δ`
/// * `F̄`: `E[(1/(T+1)) Σ_t 𝟙(S_t safe)] ≥ 1 − δ`
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub in_f_hat: bool,
    pub in_f: bool,
    pub in_f_bar: bool,
    pub p_joint: f64,
    pub v_c: f64,
    /// `E[Σ_{t=0}^{T} 𝟙(S_t ∈ S_safe)]`
    pub expected_safe_count: f64,
    /// `E[Σ_{t=0}^{T} 𝟙(S_t ∉ S_safe)]`
    pub expected_unsafe_count: f64,
    pub delta: f64,
    pub horizon: usize,
}

impl FeasibilityVerdict {
    /// `F̂ ⇒ F ⇒ F̄` holds for this policy.
    pub fn inclusions_hold(&self) -> bool {
        (!self.in_f_hat || self.in_f) && (!self.in_f || self.in_f_bar)
    }

    /// Markov's inequality on the safe count:
    /// `E[Σ 𝟙] ≥ (T+1) · P(Σ 𝟙 = T+1)`, up to `tol`.
    pub fn markov_step_holds(&self, tol: f64) -> bool {
        self.expected_safe_count + tol >= (self.horizon + 1) as f64 * self.p_joint
    }
}

pub fn feasibility_verdict(mdp: &TabularMdp, policy: &SoftmaxTabularPolicy, delta: f64) -> Result<FeasibilityVerdict> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Precondition(format!("δ = {delta} outside [0, 1]")));
    }
    let horizon = mdp.horizon();
    let (mut p_joint, mut safe_count, mut unsafe_count) = (0.0, 0.0, 0.0);
    for (traj, p) in enumerate_trajectories(mdp, policy)? {
        let safe = traj.safe_flags().iter().filter(|&&b| b).count();
        if safe == horizon + 1 {
            p_joint += p;
        }
        safe_count += p * safe as f64;
        unsafe_count += p * (horizon + 1 - safe) as f64;
    }
    let v_c = safe_count / (horizon + 1) as f64;
    Ok(FeasibilityVerdict {
        in_f_hat: unsafe_count <= delta,
        in_f: p_joint >= 1.0 - delta,
        in_f_bar: v_c >= 1.0 - delta,
        p_joint,
        v_c,
        expected_safe_count: safe_count,
        expected_unsafe_count: unsafe_count,
        delta,
        horizon,
    })
}
