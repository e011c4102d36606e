//! Exact Lagrangian dual of the cumulative-safety problem on a tabular MDP.
//!
//! The primal is `max V s.t. V_c ≥ ξ` over episode-level mixtures of
//! deterministic Markov policies. The dual function is computed by backward
//! dynamic programming; its minimizer over `λ ∈ [0, λ_max]` by golden-section
//! search followed by an exact kink polish. The primal optimum is computed
//! independently from the `(V_c, V)` points of all deterministic policies.

use crate::error::{Error, Result};
use crate::oracle::exact::VcScale;
use crate::oracle::TabularMdp;

/// Largest number of deterministic policies the primal solver enumerates.
pub const POLICY_LIMIT: f64 = 4_194_304.0;

const GOLDEN_TOL: f64 = 1e-8;

/// Time-dependent deterministic Markov policy: `actions[t][s]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy {
    pub actions: Vec<Vec<usize>>,
}

impl DeterministicPolicy {
    pub fn action(&self, s: usize, t: usize) -> usize {
        self.actions[t][s]
    }
}

/// `(V, V_c)` of a deterministic policy by forward propagation of the state
/// distribution.
pub fn evaluate_deterministic(mdp: &TabularMdp, policy: &DeterministicPolicy, scale: VcScale) -> (f64, f64) {
    let n_s = mdp.n_states();
    let mut dist = vec![0.0; n_s];
    dist[mdp.s0()] = 1.0;
    let (mut value, mut safe_mass) = (0.0, 0.0);
    for t in 0..mdp.horizon() {
        let mut next = vec![0.0; n_s];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            if mdp.is_safe(s) {
                safe_mass += mass;
            }
            let a = policy.action(s, t);
            value += mass * mdp.reward(s, a);
            for (n, p) in mdp.next_dist(s, a).iter().enumerate() {
                next[n] += mass * p;
            }
        }
        dist = next;
    }
    safe_mass += dist
        .iter()
        .enumerate()
        .filter(|(s, _)| mdp.is_safe(*s))
        .map(|(_, m)| m)
        .sum::<f64>();
    (value, scale.factor(mdp.horizon()) * safe_mass)
}

/// `max_π V(π) + λ (V_c(π) − ξ)` and a maximizing deterministic policy.
///
/// Stage rewards are `r(s,a) + λ c 𝟙(s safe)` with `c` the `V_c` scale; the
/// terminal indicator enters at stage `T`. Ties go to the lowest action.
pub fn dual_function(mdp: &TabularMdp, lambda: f64, xi: f64, scale: VcScale) -> Result<(f64, DeterministicPolicy)> {
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!(
            "dual multiplier must be non-negative, got {lambda}"
        )));
    }
    let (n_s, n_a, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let bonus = lambda * scale.factor(horizon);
    let indicator = |s: usize| if mdp.is_safe(s) { bonus } else { 0.0 };
    let mut w: Vec<f64> = (0..n_s).map(indicator).collect();
    let mut actions = vec![vec![0; n_s]; horizon];
    for t in (0..horizon).rev() {
        let mut next_w = vec![0.0; n_s];
        for s in 0..n_s {
            let mut best = f64::NEG_INFINITY;
            for a in 0..n_a {
                let cont: f64 = mdp.next_dist(s, a).iter().zip(&w).map(|(p, v)| p * v).sum();
                let q = mdp.reward(s, a) + indicator(s) + cont;
                if q > best {
                    best = q;
                    actions[t][s] = a;
                }
            }
            next_w[s] = best;
        }
        w = next_w;
    }
    Ok((w[mdp.s0()] - lambda * xi, DeterministicPolicy { actions }))
}

/// A point `(V_c, V)` attained by a deterministic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPoint {
    pub vc: f64,
    pub value: f64,
    pub policy: DeterministicPolicy,
}

/// Every deterministic Markov policy that differs on reachable decisions.
///
/// Stage 0 only needs the action at `s0`, so there are
/// `A^(1 + S(T-1))` policies.
pub fn deterministic_points(mdp: &TabularMdp, scale: VcScale) -> Result<Vec<PolicyPoint>> {
    let (n_s, n_a, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let slots = 1 + n_s * (horizon - 1);
    let count = (n_a as f64).powi(slots as i32);
    if count > POLICY_LIMIT {
        return Err(Error::EnumerationGuard {
            paths: count,
            limit: POLICY_LIMIT,
        });
    }
    let count = count as usize;
    let mut points = Vec::with_capacity(count);
    let mut digits = vec![0usize; slots];
    for _ in 0..count {
        let mut actions = vec![vec![0; n_s]; horizon];
        actions[0][mdp.s0()] = digits[0];
        for t in 1..horizon {
            for s in 0..n_s {
                actions[t][s] = digits[1 + (t - 1) * n_s + s];
            }
        }
        let policy = DeterministicPolicy { actions };
        let (value, vc) = evaluate_deterministic(mdp, &policy, scale);
        points.push(PolicyPoint { vc, value, policy });
        for d in digits.iter_mut() {
            *d += 1;
            if *d < n_a {
                break;
            }
            *d = 0;
        }
    }
    Ok(points)
}

/// Best mixture of at most two points meeting `α vc_i + (1−α) vc_j ≥ ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub first: usize,
    pub second: usize,
    /// Weight on `first`.
    pub alpha: f64,
    pub value: f64,
}

/// Closed-form best mixture of two points under `V_c ≥ ξ`.
pub fn mix_pair(i: (f64, f64), j: (f64, f64), xi: f64) -> Option<(f64, f64)> {
    let ((ci, vi), (cj, vj)) = (i, j);
    match (ci >= xi, cj >= xi) {
        (true, true) => Some(if vi >= vj { (1.0, vi) } else { (0.0, vj) }),
        (false, false) => None,
        (true, false) => {
            if vi >= vj {
                Some((1.0, vi))
            } else {
                let alpha = (xi - cj) / (ci - cj);
                Some((alpha, alpha * vi + (1.0 - alpha) * vj))
            }
        }
        (false, true) => mix_pair(j, i, xi).map(|(a, v)| (1.0 - a, v)),
    }
}

/// Exhaustive search over all pairs; quadratic, for small point sets.
pub fn best_mixture_pairwise(points: &[(f64, f64)], xi: f64) -> Option<Mixture> {
    let mut best: Option<Mixture> = None;
    for i in 0..points.len() {
        for j in i..points.len() {
            if let Some((alpha, value)) = mix_pair(points[i], points[j], xi) {
                if best.as_ref().is_none_or(|b| value > b.value) {
                    best = Some(Mixture {
                        first: i,
                        second: j,
                        alpha,
                        value,
                    });
                }
            }
        }
    }
    best
}

/// Same optimum as [`best_mixture_pairwise`] in `O(n log n)`.
///
/// The optimum is either the best single point with `vc ≥ ξ` or lies on the
/// upper concave hull of the point set at `vc = ξ`.
pub fn best_mixture(points: &[(f64, f64)], xi: f64) -> Option<Mixture> {
    let mut best: Option<Mixture> = None;
    for (i, &(c, v)) in points.iter().enumerate() {
        if c >= xi && best.as_ref().is_none_or(|b| v > b.value) {
            best = Some(Mixture {
                first: i,
                second: i,
                alpha: 1.0,
                value: v,
            });
        }
    }
    best.as_ref()?;

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a], points[b]);
        pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1))
    });
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<usize> = Vec::new();
    for &i in &order {
        while hull.len() >= 2 {
            let (o, a) = (points[hull[hull.len() - 2]], points[hull[hull.len() - 1]]);
            if cross(o, a, points[i]) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    for w in hull.windows(2) {
        let (left, right) = (points[w[0]], points[w[1]]);
        if left.0 < xi && xi <= right.0 {
            if let Some((alpha, value)) = mix_pair(right, left, xi) {
                if best.as_ref().is_none_or(|b| value > b.value) {
                    best = Some(Mixture {
                        first: w[1],
                        second: w[0],
                        alpha,
                        value,
                    });
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualResult {
    pub xi: f64,
    pub lambda_star: f64,
    /// Primal optimum over mixtures; `-∞` when `ξ` is infeasible.
    pub p_tilde_star: f64,
    pub d_tilde_star: f64,
    pub feasible: bool,
    /// Optimal mixture: `alpha` on `policies.0`, the rest on `policies.1`.
    pub argmax_policy: Option<(DeterministicPolicy, DeterministicPolicy, f64)>,
}

impl DualResult {
    pub fn duality_gap(&self) -> f64 {
        self.d_tilde_star - self.p_tilde_star
    }
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Minimizes the dual over `[0, lambda_max]` and solves the primal
/// independently over mixtures of deterministic policies.
pub fn dual_optimum(mdp: &TabularMdp, xi: f64, lambda_max: f64, scale: VcScale) -> Result<DualResult> {
    if !(lambda_max > 0.0) {
        return Err(Error::Precondition("lambda_max must be positive".into()));
    }
    let dual = |lambda: f64| dual_function(mdp, lambda, xi, scale).map(|(v, _)| v);
    let line = |lambda: f64| -> Result<(f64, f64)> {
        let (_, policy) = dual_function(mdp, lambda, xi, scale)?;
        let (value, vc) = evaluate_deterministic(mdp, &policy, scale);
        Ok((value, vc - xi))
    };

    let mut lambda = golden_section(dual, 0.0, lambda_max, GOLDEN_TOL)?;
    let mut best = dual(lambda)?;
    for candidate in [0.0, lambda_max] {
        let v = dual(candidate)?;
        if v < best {
            best = v;
            lambda = candidate;
        }
    }
    // The dual is piecewise linear: intersect the supporting lines on either
    // side of the bracket to land on the kink exactly.
    for _ in 0..4 {
        let eps = 1e-6 * lambda.max(1.0);
        let (v_left, s_left) = line((lambda - eps).max(0.0))?;
        let (v_right, s_right) = line((lambda + eps).min(lambda_max))?;
        if s_right <= s_left {
            break;
        }
        let kink = (v_left - v_right) / (s_right - s_left);
        if !(0.0..=lambda_max).contains(&kink) {
            break;
        }
        let v = dual(kink)?;
        if v <= best {
            best = v;
            lambda = kink;
        } else {
            break;
        }
    }

    let points = deterministic_points(mdp, scale)?;
    let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.vc, p.value)).collect();
    let (p_tilde_star, feasible, argmax_policy) = match best_mixture(&coords, xi) {
        Some(m) => (
            m.value,
            true,
            Some((points[m.first].policy.clone(), points[m.second].policy.clone(), m.alpha)),
        ),
        None => (f64::NEG_INFINITY, false, None),
    };
    Ok(DualResult {
        xi,
        lambda_star: lambda,
        p_tilde_star,
        d_tilde_star: best,
        feasible,
        argmax_policy,
    })
}

/// Slack of `P̃⋆(ξ₁) ≤ P̃⋆(ξ₀) + λ̃⋆(ξ₀)(ξ₀ − ξ₁)`, i.e. `rhs − lhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBoundCheck {
    pub holds: bool,
    pub slack: f64,
    pub at_xi0: DualResult,
    pub at_xi1: DualResult,
}

pub fn check_dual_bound(
    mdp: &TabularMdp,
    xi0: f64,
    xi1: f64,
    lambda_max: f64,
    scale: VcScale,
) -> Result<DualBoundCheck> {
    let at_xi0 = dual_optimum(mdp, xi0, lambda_max, scale)?;
    let at_xi1 = dual_optimum(mdp, xi1, lambda_max, scale)?;
    check_dual_bound_from(at_xi0, at_xi1)
}

/// [`check_dual_bound`] from already-solved endpoints.
pub fn check_dual_bound_from(at_xi0: DualResult, at_xi1: DualResult) -> Result<DualBoundCheck> {
    for r in [&at_xi0, &at_xi1] {
        if !r.feasible {
            return Err(Error::Precondition(format!("ξ = {} is infeasible", r.xi)));
        }
    }
    let rhs = at_xi0.p_tilde_star + at_xi0.lambda_star * (at_xi0.xi - at_xi1.xi);
    let slack = rhs - at_xi1.p_tilde_star;
    Ok(DualBoundCheck {
        holds: slack >= -1e-9,
        slack,
        at_xi0,
        at_xi1,
    })
}
