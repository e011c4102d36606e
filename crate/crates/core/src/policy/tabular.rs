use crate::error::{Error, Result};
use crate::grad::GradientVector;
use crate::policy::ScoreFunction;
use crate::rng::RngStream;

/// Softmax over per-(state, stage) logits.
///
/// Logits are stored as `θ[s][a][stage]`; with a single stage the policy is
/// stationary and every `t` maps to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTabularPolicy {
    n_states: usize,
    n_actions: usize,
    stages: usize,
    logits: Vec<f64>,
}

impl SoftmaxTabularPolicy {
    pub fn uniform(n_states: usize, n_actions: usize, stages: usize) -> Self {
        assert!(n_states > 0 && n_actions > 0 && stages > 0);
        Self {
            n_states,
            n_actions,
            stages,
            logits: vec![0.0; n_states * n_actions * stages],
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, stages: usize, logits: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || stages == 0 {
            return Err(Error::Config("tabular policy dimensions must be positive".into()));
        }
        let expected = n_states * n_actions * stages;
        if logits.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: logits.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            stages,
            logits,
        })
    }

    /// Logits drawn i.i.d. `N(0, scale²)`.
    pub fn random(n_states: usize, n_actions: usize, stages: usize, scale: f64, rng: &mut RngStream) -> Self {
        let mut p = Self::uniform(n_states, n_actions, stages);
        p.logits.iter_mut().for_each(|l| *l = scale * rng.normal());
        p
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn stage(&self, t: usize) -> usize {
        t.min(self.stages - 1)
    }

    pub fn index(&self, s: usize, a: usize, t: usize) -> usize {
        (s * self.n_actions + a) * self.stages + self.stage(t)
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::Range {
                what: "state",
                index: s,
                max: self.n_states - 1,
            });
        }
        if a >= self.n_actions {
            return Err(Error::Range {
                what: "action",
                index: a,
                max: self.n_actions - 1,
            });
        }
        Ok(())
    }

    /// `π(·|s, t)`; panics on an out-of-range state.
    pub fn probs(&self, s: usize, t: usize) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.n_actions).map(|a| self.logits[self.index(s, a, t)]).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn prob(&self, s: usize, a: usize, t: usize) -> Result<f64> {
        self.check(s, a)?;
        Ok(self.probs(s, t)[a])
    }

    pub fn log_prob(&self, s: usize, a: usize, t: usize) -> Result<f64> {
        self.check(s, a)?;
        let logits: Vec<f64> = (0..self.n_actions).map(|b| self.logits[self.index(s, b, t)]).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(logits[a] - lse)
    }

    /// Checked variant of [`ScoreFunction::score`].
    pub fn tabular_score(&self, s: usize, a: usize, t: usize) -> Result<GradientVector> {
        self.check(s, a)?;
        Ok(self.score(&s, &a, t))
    }

    pub fn sample(&self, s: usize, t: usize, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        let probs = self.probs(s, t);
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.n_actions - 1
    }
}

impl ScoreFunction<usize, usize> for SoftmaxTabularPolicy {
    fn param_shape(&self) -> (usize, usize) {
        (self.n_states * self.n_actions, self.stages)
    }

    /// `e_{s,a,t} − π(·|s,t)` on the `(s, ·, t)` slice.
    fn add_score(&self, state: &usize, action: &usize, t: usize, weight: f64, out: &mut GradientVector) {
        let probs = self.probs(*state, t);
        for (b, p) in probs.iter().enumerate() {
            let idx = self.index(*state, b, t);
            let indicator = if b == *action { 1.0 } else { 0.0 };
            out[idx] += weight * (indicator - p);
        }
    }
}
