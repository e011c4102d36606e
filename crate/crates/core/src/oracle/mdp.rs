use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::policy::SoftmaxTabularPolicy;
use crate::rng::RngStream;

const ROW_TOLERANCE: f64 = 1e-9;

/// Finite-horizon MDP with an explicit kernel and safe-state set.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    s0: usize,
    safe: Vec<bool>,
    /// `reward[s * A + a]`
    reward: Vec<f64>,
    /// `transition[(s * A + a) * S + s']`
    transition: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        s0: usize,
        safe: Vec<bool>,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            n_states,
            n_actions,
            horizon,
            s0,
            safe,
            reward,
            transition,
        };
        mdp.validate(ROW_TOLERANCE)?;
        Ok(mdp)
    }

    fn validate(&self, row_tol: f64) -> Result<()> {
        let (s, a) = (self.n_states, self.n_actions);
        if s == 0 || a == 0 {
            return Err(Error::Config(
                "tabular MDP needs at least one state and one action".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("tabular MDP horizon must be at least 1".into()));
        }
        if self.safe.len() != s {
            return Err(Error::Dimension {
                expected: s,
                got: self.safe.len(),
            });
        }
        if self.reward.len() != s * a {
            return Err(Error::Dimension {
                expected: s * a,
                got: self.reward.len(),
            });
        }
        if self.transition.len() != s * a * s {
            return Err(Error::Dimension {
                expected: s * a * s,
                got: self.transition.len(),
            });
        }
        if self.s0 >= s {
            return Err(Error::Range {
                what: "initial state",
                index: self.s0,
                max: s - 1,
            });
        }
        if !self.safe[self.s0] {
            return Err(Error::Config(format!("initial state {} is not safe", self.s0)));
        }
        for (row, probs) in self.transition.chunks_exact(s).enumerate() {
            if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::Config(format!(
                    "transition row (s={}, a={}) has a negative or non-finite entry",
                    row / a,
                    row % a
                )));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > row_tol {
                return Err(Error::Config(format!(
                    "transition row (s={}, a={}) sums to {total}",
                    row / a,
                    row % a
                )));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn is_safe(&self, s: usize) -> bool {
        self.safe[s]
    }

    pub fn safe_set(&self) -> &[bool] {
        &self.safe
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// `Pr(·|s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// A softmax policy of matching shape with one logit block per stage.
    pub fn uniform_policy(&self) -> SoftmaxTabularPolicy {
        SoftmaxTabularPolicy::uniform(self.n_states, self.n_actions, self.horizon)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "tabular S={} A={} T={} s0={}",
            self.n_states, self.n_actions, self.horizon, self.s0
        );
        out.push_str("safe");
        for (s, _) in self.safe.iter().enumerate().filter(|(_, b)| **b) {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let _ = writeln!(out, "r {s} {a} {:?}", self.reward(s, a));
            }
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for (next, p) in self.next_dist(s, a).iter().enumerate() {
                    if *p != 0.0 {
                        let _ = writeln!(out, "p {s} {a} {next} {p:?}");
                    }
                }
            }
        }
        out
    }

    /// Parses the `tabular` text format. Missing reward lines default to 0;
    /// transition rows must sum to 1 within 1e-9.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize, usize, usize)> = None;
        let mut safe: Option<Vec<bool>> = None;
        let mut reward = Vec::new();
        let mut transition = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let kind = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let int = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| Error::parse(line_no, format!("expected an index, found `{v}`")))
            };
            let real = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("expected a number, found `{v}`")))
            };
            if kind == "tabular" {
                if header.is_some() {
                    return Err(Error::parse(line_no, "duplicate header"));
                }
                let (mut s, mut a, mut t, mut s0) = (None, None, None, None);
                for field in &rest {
                    let (k, v) = field
                        .split_once('=')
                        .ok_or_else(|| Error::parse(line_no, format!("malformed field `{field}`")))?;
                    let v = int(v)?;
                    match k {
                        "S" => s = Some(v),
                        "A" => a = Some(v),
                        "T" => t = Some(v),
                        "s0" => s0 = Some(v),
                        _ => return Err(Error::parse(line_no, format!("unknown header field `{k}`"))),
                    }
                }
                let need = |o: Option<usize>, k: &str| {
                    o.ok_or_else(|| Error::parse(line_no, format!("header is missing `{k}`")))
                };
                let (s, a, t, s0) = (need(s, "S")?, need(a, "A")?, need(t, "T")?, need(s0, "s0")?);
                if s == 0 || a == 0 {
                    return Err(Error::parse(line_no, "S and A must be positive"));
                }
                reward = vec![0.0; s * a];
                transition = vec![0.0; s * a * s];
                header = Some((s, a, t, s0));
                continue;
            }
            let (n_s, n_a, _, _) = header.ok_or_else(|| Error::parse(line_no, "expected `tabular` header first"))?;
            let check_state = |v: usize| -> Result<usize> {
                if v < n_s {
                    Ok(v)
                } else {
                    Err(Error::parse(line_no, format!("state {v} out of range")))
                }
            };
            let check_action = |v: usize| -> Result<usize> {
                if v < n_a {
                    Ok(v)
                } else {
                    Err(Error::parse(line_no, format!("action {v} out of range")))
                }
            };
            match kind {
                "safe" => {
                    if safe.is_some() {
                        return Err(Error::parse(line_no, "duplicate `safe` line"));
                    }
                    let mut set = vec![false; n_s];
                    for v in &rest {
                        set[check_state(int(v)?)?] = true;
                    }
                    safe = Some(set);
                }
                "r" => {
                    let [s, a, v] = rest[..] else {
                        return Err(Error::parse(line_no, "expected `r <s> <a> <value>`"));
                    };
                    let (s, a) = (check_state(int(s)?)?, check_action(int(a)?)?);
                    reward[s * n_a + a] = real(v)?;
                }
                "p" => {
                    let [s, a, next, v] = rest[..] else {
                        return Err(Error::parse(line_no, "expected `p <s> <a> <s'> <prob>`"));
                    };
                    let (s, a, next) = (check_state(int(s)?)?, check_action(int(a)?)?, check_state(int(next)?)?);
                    transition[(s * n_a + a) * n_s + next] = real(v)?;
                }
                other => return Err(Error::parse(line_no, format!("unknown line kind `{other}`"))),
            }
        }
        let (n_s, n_a, t, s0) = header.ok_or_else(|| Error::parse(0, "missing `tabular` header"))?;
        let safe = safe.ok_or_else(|| Error::parse(0, "missing `safe` line"))?;
        Self::new(n_s, n_a, t, s0, safe, reward, transition)
    }

    /// Random instance for verification sweeps: state 0 is the safe start and
    /// at least one other state is unsafe.
    pub fn random(rng: &mut RngStream, shape: InstanceShape) -> Self {
        let n_states = shape.states.0 + rng.below(shape.states.1 - shape.states.0 + 1);
        let horizon = shape.horizon.0 + rng.below(shape.horizon.1 - shape.horizon.0 + 1);
        let n_actions = shape.actions;
        let mut safe = vec![true; n_states];
        for flag in safe.iter_mut().skip(1) {
            *flag = rng.uniform() < 0.5;
        }
        if safe.iter().all(|&b| b) {
            safe[1 + rng.below(n_states - 1)] = false;
        }
        let reward = (0..n_states * n_actions)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect();
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            // unsafe targets get a random damping so low-risk rows also occur
            let damp = rng.uniform().powi(3);
            let mut row: Vec<f64> = (0..n_states)
                .map(|next| {
                    let w = rng.uniform() + 1e-3;
                    if safe[next] {
                        w
                    } else {
                        w * damp
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            transition.extend(row);
        }
        Self::new(n_states, n_actions, horizon, 0, safe, reward, transition).expect("generated instance is valid")
    }
}

/// Size ranges for [`TabularMdp::random`]; bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceShape {
    pub states: (usize, usize),
    pub actions: usize,
    pub horizon: (usize, usize),
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            states: (2, 4),
            actions: 2,
            horizon: (2, 4),
        }
    }
}

/// Text form of a tabular policy: `softmax S= A= stages=` then `l s a t value`.
pub fn policy_to_text(policy: &SoftmaxTabularPolicy) -> String {
    let mut out = format!(
        "softmax S={} A={} stages={}\n",
        policy.n_states(),
        policy.n_actions(),
        policy.stages()
    );
    for s in 0..policy.n_states() {
        for a in 0..policy.n_actions() {
            for t in 0..policy.stages() {
                let _ = writeln!(out, "l {s} {a} {t} {:?}", policy.logits()[policy.index(s, a, t)]);
            }
        }
    }
    out
}

pub fn policy_from_text(text: &str) -> Result<SoftmaxTabularPolicy> {
    let mut policy: Option<SoftmaxTabularPolicy> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "softmax" => {
                let mut dims = [0usize; 3];
                for field in &parts[1..] {
                    let (k, v) = field
                        .split_once('=')
                        .ok_or_else(|| Error::parse(line_no, format!("malformed field `{field}`")))?;
                    let v: usize = v
                        .parse()
                        .map_err(|_| Error::parse(line_no, format!("bad value `{v}`")))?;
                    match k {
                        "S" => dims[0] = v,
                        "A" => dims[1] = v,
                        "stages" => dims[2] = v,
                        _ => return Err(Error::parse(line_no, format!("unknown field `{k}`"))),
                    }
                }
                if dims.contains(&0) {
                    return Err(Error::parse(line_no, "softmax dimensions must be positive"));
                }
                policy = Some(SoftmaxTabularPolicy::uniform(dims[0], dims[1], dims[2]));
            }
            "l" => {
                let p = policy
                    .as_mut()
                    .ok_or_else(|| Error::parse(line_no, "expected `softmax` header first"))?;
                let [_, s, a, t, v] = parts[..] else {
                    return Err(Error::parse(line_no, "expected `l <s> <a> <t> <value>`"));
                };
                let idx_of = |v: &str| {
                    v.parse::<usize>()
                        .map_err(|_| Error::parse(line_no, format!("bad index `{v}`")))
                };
                let (s, a, t) = (idx_of(s)?, idx_of(a)?, idx_of(t)?);
                if s >= p.n_states() || a >= p.n_actions() || t >= p.stages() {
                    return Err(Error::parse(line_no, "logit index out of range"));
                }
                let i = p.index(s, a, t);
                p.logits_mut()[i] = v
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad logit `{v}`")))?;
            }
            other => return Err(Error::parse(line_no, format!("unknown line kind `{other}`"))),
        }
    }
    policy.ok_or_else(|| Error::parse(0, "missing `softmax` header"))
}
