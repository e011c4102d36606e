//! Episode records and the safety-indicator algebra.

use crate::error::{Error, Result};

/// One fixed-horizon episode: `T + 1` states, `T` actions and rewards, and a
/// safety flag for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A> {
    states: Vec<S>,
    actions: Vec<A>,
    rewards: Vec<f64>,
    safe_flags: Vec<bool>,
}

impl<S, A> Trajectory<S, A> {
    pub fn new(states: Vec<S>, actions: Vec<A>, rewards: Vec<f64>, safe_flags: Vec<bool>) -> Result<Self> {
        let horizon = actions.len();
        if horizon == 0 {
            return Err(Error::Precondition("trajectory horizon must be at least 1".into()));
        }
        if states.len() != horizon + 1 {
            return Err(Error::Dimension {
                expected: horizon + 1,
                got: states.len(),
            });
        }
        if rewards.len() != horizon {
            return Err(Error::Dimension {
                expected: horizon,
                got: rewards.len(),
            });
        }
        if safe_flags.len() != horizon + 1 {
            return Err(Error::Dimension {
                expected: horizon + 1,
                got: safe_flags.len(),
            });
        }
        Ok(Self {
            states,
            actions,
            rewards,
            safe_flags,
        })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn actions(&self) -> &[A] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn safe_flags(&self) -> &[bool] {
        &self.safe_flags
    }

    /// `b_t` as 0 or 1.
    pub fn safe(&self, t: usize) -> u8 {
        u8::from(self.safe_flags[t])
    }

    /// Undiscounted task return `Σ r_t`.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// True when every state `S_0..=S_T` is safe.
    pub fn jointly_safe(&self) -> bool {
        self.safe_flags.iter().all(|&b| b)
    }

    /// `G_t = Π_{u=t}^{T} b_u`.
    pub fn indicator_tail_product(&self, t: usize) -> Result<u8> {
        let horizon = self.horizon();
        if t > horizon {
            return Err(Error::Range {
                what: "G_t index",
                index: t,
                max: horizon,
            });
        }
        Ok(u8::from(self.safe_flags[t..].iter().all(|&b| b)))
    }

    /// Augmented reward-to-go `R_{t,μ}` from step `t`.
    ///
    /// Sums `r_u + μ b_u` over `u = t..T-1`. With `bonus.terminal` set the
    /// terminal indicator `μ b_T` is also credited, so every suffix that
    /// reaches the final step carries it.
    pub fn reward_to_go(&self, t: usize, bonus: SafetyBonus) -> Result<f64> {
        let horizon = self.horizon();
        if t >= horizon {
            return Err(Error::Range {
                what: "reward-to-go index",
                index: t,
                max: horizon - 1,
            });
        }
        let mut total = bonus.terminal_term(self.safe_flags[horizon]);
        for u in t..horizon {
            total += augmented_reward(self.rewards[u], self.safe_flags[u], bonus.mu);
        }
        Ok(total)
    }

    /// All reward-to-go values `R_{0,μ}..R_{T-1,μ}` in one backward pass.
    pub fn rewards_to_go(&self, bonus: SafetyBonus) -> Vec<f64> {
        let horizon = self.horizon();
        let mut out = vec![0.0; horizon];
        let mut acc = bonus.terminal_term(self.safe_flags[horizon]);
        for u in (0..horizon).rev() {
            acc += augmented_reward(self.rewards[u], self.safe_flags[u], bonus.mu);
            out[u] = acc;
        }
        out
    }
}

/// `r + μ·𝟙(safe)`.
#[inline]
pub fn augmented_reward(reward: f64, safe: bool, mu: f64) -> f64 {
    if safe {
        reward + mu
    } else {
        reward
    }
}

/// Safety bonus `μ` added to rewards of the cumulative formulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyBonus {
    pub mu: f64,
    /// Credit the terminal state's indicator `μ b_T` as well.
    pub terminal: bool,
}

impl SafetyBonus {
    pub const NONE: SafetyBonus = SafetyBonus {
        mu: 0.0,
        terminal: false,
    };

    pub fn new(mu: f64, terminal: bool) -> Self {
        Self { mu, terminal }
    }

    #[inline]
    fn terminal_term(&self, safe_terminal: bool) -> f64 {
        if self.terminal && safe_terminal {
            self.mu
        } else {
            0.0
        }
    }
}
