//! Stochastic gradient ascent for the two safety formulations.
//!
//! * probabilistic: `θ ← θ + η (∇̂V + λ ∇̂P(all safe))`
//! * cumulative: `θ ← θ + η ∇̂V_μ` with reward `r + μ 𝟙(safe)`

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::env::{NavEnvConfig, Point};
use crate::error::{Error, Result};
use crate::estimators::{batch_average, grad_lagrangian, grad_value, grad_value_with_baseline};
use crate::grad::GradientVector;
use crate::policy::RbfGaussianPolicy;
use crate::rng::RngStream;
use crate::trajectory::{SafetyBonus, Trajectory};

/// Stream id of the training random stream for a given seed.
pub const TRAIN_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formulation {
    Probabilistic,
    Cumulative,
}

impl Formulation {
    pub const ALL: [Formulation; 2] = [Formulation::Probabilistic, Formulation::Cumulative];

    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Probabilistic => "probabilistic",
            Formulation::Cumulative => "cumulative",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probabilistic" | "prob" => Ok(Formulation::Probabilistic),
            "cumulative" | "cum" => Ok(Formulation::Cumulative),
            other => Err(Error::Config(format!(
                "unknown formulation `{other}` (use prob or cum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    Fixed,
    UniformSafe,
}

impl StartMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StartMode::Fixed => "fixed",
            StartMode::UniformSafe => "uniform_safe",
        }
    }
}

impl FromStr for StartMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(StartMode::Fixed),
            "uniform_safe" => Ok(StartMode::UniformSafe),
            other => Err(Error::Config(format!(
                "unknown start mode `{other}` (use fixed or uniform_safe)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub formulation: Formulation,
    /// `λ` for the probabilistic formulation, `μ` for the cumulative one.
    pub weight: f64,
    pub eta: f64,
    /// Number of updates `K`.
    pub episodes: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub start_mode: StartMode,
    pub terminal_bonus: bool,
    pub log_every: usize,
    /// Rescale gradients whose norm exceeds this cap.
    pub grad_clip: Option<f64>,
    /// Subtract the batch-mean return from the value weights.
    pub baseline: bool,
    /// Rewrite the checkpoint every this many updates; 0 disables.
    pub checkpoint_every: usize,
    /// Record wall-clock milliseconds in the log; zeros otherwise.
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::Probabilistic,
            weight: 6.0,
            eta: 0.002,
            episodes: 40_000,
            batch_size: 1,
            seed: 1,
            start_mode: StartMode::Fixed,
            terminal_bonus: true,
            log_every: 100,
            grad_clip: None,
            baseline: false,
            checkpoint_every: 0,
            wall_clock: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::Config(format!(
                "weight must be non-negative, got {}",
                self.weight
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if let Some(cap) = self.grad_clip {
            if !(cap > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {cap}")));
            }
        }
        Ok(())
    }

    fn bonus(&self) -> SafetyBonus {
        match self.formulation {
            Formulation::Probabilistic => SafetyBonus::NONE,
            Formulation::Cumulative => SafetyBonus::new(self.weight, self.terminal_bonus),
        }
    }
}

/// One training-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub iter: usize,
    pub episode_return: f64,
    /// Fraction of episodes with every state safe (`G_0`).
    pub joint_safe: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

pub const LOG_HEADER: &str = "iter,episode_return,joint_safe,grad_norm,wall_ms";

impl LogRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{}",
            self.iter, self.episode_return, self.joint_safe, self.grad_norm, self.wall_ms
        )
    }
}

pub fn log_to_csv(records: &[LogRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn start_state(cfg: &TrainConfig, env: &NavEnvConfig, rng: &mut RngStream) -> Result<Point> {
    match cfg.start_mode {
        StartMode::Fixed => Ok(env.start),
        StartMode::UniformSafe => env.sample_safe_uniform(rng),
    }
}

fn rollout_batch(
    policy: &RbfGaussianPolicy,
    cfg: &TrainConfig,
    env: &NavEnvConfig,
    rng: &mut RngStream,
) -> Result<Vec<Trajectory<Point, Point>>> {
    (0..cfg.batch_size)
        .map(|_| {
            let s0 = start_state(cfg, env, rng)?;
            env.rollout(policy, s0, rng)
        })
        .collect()
}

/// Applies `θ ← θ + η g` after the optional norm cap and returns the norm of
/// the raw gradient.
fn apply(policy: &mut RbfGaussianPolicy, cfg: &TrainConfig, mut grad: GradientVector, iter: usize) -> Result<f64> {
    if !grad.is_finite() {
        return Err(Error::NonFinite { iter });
    }
    let norm = grad.norm();
    if let Some(cap) = cfg.grad_clip {
        if norm > cap {
            grad.scale(cap / norm);
        }
    }
    policy.ascend(cfg.eta, &grad)?;
    Ok(norm)
}

fn summarize(iter: usize, batch: &[Trajectory<Point, Point>], grad_norm: f64) -> LogRecord {
    let n = batch.len() as f64;
    LogRecord {
        iter,
        episode_return: batch.iter().map(|t| t.total_reward()).sum::<f64>() / n,
        joint_safe: batch.iter().filter(|t| t.jointly_safe()).count() as f64 / n,
        grad_norm,
        wall_ms: 0,
    }
}

fn batch_baseline(cfg: &TrainConfig, batch: &[Trajectory<Point, Point>]) -> f64 {
    if !cfg.baseline {
        return 0.0;
    }
    let bonus = cfg.bonus();
    batch
        .iter()
        .map(|t| t.reward_to_go(0, bonus).expect("horizon >= 1"))
        .sum::<f64>()
        / batch.len() as f64
}

/// One update of `θ ← θ + η · mean(∇̂V + λ ∇̂P)`.
pub fn train_step_probabilistic(
    policy: &mut RbfGaussianPolicy,
    cfg: &TrainConfig,
    env: &NavEnvConfig,
    rng: &mut RngStream,
    iter: usize,
) -> Result<LogRecord> {
    let batch = rollout_batch(policy, cfg, env, rng)?;
    let baseline = batch_baseline(cfg, &batch);
    let grads = batch
        .iter()
        .map(|traj| {
            let mut g = grad_lagrangian(traj, policy, cfg.weight)?;
            if baseline != 0.0 {
                // grad_lagrangian has no baseline term; shift the value part
                let shift = grad_value_with_baseline(traj, policy, SafetyBonus::NONE, baseline);
                g.axpy(-1.0, &grad_value(traj, policy, SafetyBonus::NONE))?;
                g.axpy(1.0, &shift)?;
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let norm = apply(policy, cfg, batch_average(&grads)?, iter)?;
    Ok(summarize(iter, &batch, norm))
}

/// One update of `θ ← θ + η · mean(Σ_t R_{t,μ} ∇log π)`.
pub fn train_step_cumulative(
    policy: &mut RbfGaussianPolicy,
    cfg: &TrainConfig,
    env: &NavEnvConfig,
    rng: &mut RngStream,
    iter: usize,
) -> Result<LogRecord> {
    let batch = rollout_batch(policy, cfg, env, rng)?;
    let baseline = batch_baseline(cfg, &batch);
    let bonus = cfg.bonus();
    let grads: Vec<GradientVector> = batch
        .iter()
        .map(|traj| grad_value_with_baseline(traj, policy, bonus, baseline))
        .collect();
    let norm = apply(policy, cfg, batch_average(&grads)?, iter)?;
    Ok(summarize(iter, &batch, norm))
}

pub fn train_step(
    policy: &mut RbfGaussianPolicy,
    cfg: &TrainConfig,
    env: &NavEnvConfig,
    rng: &mut RngStream,
    iter: usize,
) -> Result<LogRecord> {
    match cfg.formulation {
        Formulation::Probabilistic => train_step_probabilistic(policy, cfg, env, rng, iter),
        Formulation::Cumulative => train_step_cumulative(policy, cfg, env, rng, iter),
    }
}

/// Runs `cfg.episodes` updates from `policy0`.
///
/// Log rows average each window of `log_every` updates, so there are
/// `⌈K / log_every⌉` of them. When `checkpoint` is given the policy is
/// written there at the end, every `checkpoint_every` updates, and, on abort,
/// with the last finite parameters.
pub fn train(
    cfg: &TrainConfig,
    env: &NavEnvConfig,
    policy0: RbfGaussianPolicy,
    checkpoint: Option<&Path>,
) -> Result<(RbfGaussianPolicy, Vec<LogRecord>)> {
    cfg.validate()?;
    env.validate()?;
    let started = Instant::now();
    let mut rng = RngStream::new(cfg.seed, TRAIN_STREAM);
    let mut policy = policy0;
    let mut log = Vec::with_capacity(cfg.episodes.div_ceil(cfg.log_every));
    let mut window: Vec<LogRecord> = Vec::with_capacity(cfg.log_every);

    for iter in 0..cfg.episodes {
        let before = policy.clone();
        let record = match train_step(&mut policy, cfg, env, &mut rng, iter) {
            Ok(r) => r,
            Err(e) => {
                if let Some(path) = checkpoint {
                    before.save(path)?;
                }
                return Err(e);
            }
        };
        window.push(record);
        if (iter + 1) % cfg.log_every == 0 || iter + 1 == cfg.episodes {
            let n = window.len() as f64;
            log.push(LogRecord {
                iter,
                episode_return: window.iter().map(|r| r.episode_return).sum::<f64>() / n,
                joint_safe: window.iter().map(|r| r.joint_safe).sum::<f64>() / n,
                grad_norm: window.iter().map(|r| r.grad_norm).sum::<f64>() / n,
                wall_ms: if cfg.wall_clock {
                    started.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
            window.clear();
        }
        if let Some(path) = checkpoint {
            if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
                policy.save(path)?;
            }
        }
    }
    if let Some(path) = checkpoint {
        policy.save(path)?;
    }
    Ok((policy, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{RbfLattice, ScoreFunction};

    fn small_policy() -> RbfGaussianPolicy {
        let lattice = RbfLattice::covering([0.0, 0.0], 10.0, 1.0).unwrap();
        RbfGaussianPolicy::new(lattice, 0.5, [0.5, 0.5]).unwrap()
    }

    fn cfg(formulation: Formulation, weight: f64) -> TrainConfig {
        TrainConfig {
            formulation,
            weight,
            eta: 1e-4,
            episodes: 100,
            log_every: 10,
            wall_clock: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn lambda_zero_is_plain_reinforce() {
        let env = NavEnvConfig::default();
        let mut p1 = small_policy();
        let mut p2 = small_policy();
        let (mut r1, mut r2) = (RngStream::new(3, 0), RngStream::new(3, 0));
        let c1 = cfg(Formulation::Probabilistic, 0.0);
        let c2 = cfg(Formulation::Cumulative, 0.0);
        for iter in 0..5 {
            train_step_probabilistic(&mut p1, &c1, &env, &mut r1, iter).unwrap();
            train_step_cumulative(&mut p2, &c2, &env, &mut r2, iter).unwrap();
        }
        assert_eq!(p1.theta(), p2.theta());
    }

    #[test]
    fn update_equals_eta_times_gradient() {
        let env = NavEnvConfig::default();
        let mut policy = small_policy();
        let c = TrainConfig {
            batch_size: 3,
            ..cfg(Formulation::Probabilistic, 6.0)
        };
        let mut rng = RngStream::new(4, 0);
        train_step_probabilistic(&mut policy, &c, &env, &mut rng, 0).unwrap();
        let theta0 = policy.theta().to_vec();

        let mut replay = rng.clone();
        let batch = rollout_batch(&policy, &c, &env, &mut replay).unwrap();
        let grads: Vec<_> = batch
            .iter()
            .map(|t| grad_lagrangian(t, &policy, 6.0).unwrap())
            .collect();
        let mean = batch_average(&grads).unwrap();

        train_step_probabilistic(&mut policy, &c, &env, &mut rng, 1).unwrap();
        for (i, (after, before)) in policy.theta().iter().zip(&theta0).enumerate() {
            assert!((after - before - c.eta * mean[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn unsafe_batch_gets_pure_value_step() {
        let mut env = NavEnvConfig::default();
        // the fixed start sits on the rim of an obstacle it drifts into
        env.obstacles.push(crate::env::Obstacle {
            center: [1.0, 7.0],
            radius: 1.5,
        });
        let policy = small_policy();
        let mut rng = RngStream::new(5, 0);
        let zero = |_: &Point, _: &mut RngStream| [0.0, -20.0];
        let traj = env.rollout(&zero, env.start, &mut rng).unwrap();
        assert!(traj.safe_flags()[0] && !traj.jointly_safe());
        let l = grad_lagrangian(&traj, &policy, 14.0).unwrap();
        assert_eq!(l, grad_value(&traj, &policy, SafetyBonus::NONE));
    }

    #[test]
    fn zero_reward_and_mu_leaves_theta_unchanged() {
        let mut env = NavEnvConfig::default();
        env.goal = env.start;
        env.step_scale = 1e-300;
        let mut policy = small_policy();
        let c = cfg(Formulation::Cumulative, 0.0);
        let mut rng = RngStream::new(6, 0);
        for iter in 0..5 {
            train_step_cumulative(&mut policy, &c, &env, &mut rng, iter).unwrap();
        }
        assert!(policy.theta().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_replays_bit_identically() {
        let env = NavEnvConfig::default();
        for f in Formulation::ALL {
            let c = cfg(f, 3.0);
            let (a, log_a) = train(&c, &env, small_policy(), None).unwrap();
            let (b, log_b) = train(&c, &env, small_policy(), None).unwrap();
            assert_eq!(a.to_checkpoint(), b.to_checkpoint());
            assert_eq!(log_to_csv(&log_a), log_to_csv(&log_b));
        }
    }

    #[test]
    fn log_bookkeeping() {
        let env = NavEnvConfig::default();
        let c = TrainConfig {
            episodes: 25,
            log_every: 10,
            ..cfg(Formulation::Cumulative, 1.0)
        };
        let (_, log) = train(&c, &env, small_policy(), None).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.last().unwrap().iter, 24);

        let empty = TrainConfig { episodes: 0, ..c };
        let p0 = small_policy();
        let (p, log) = train(&empty, &env, p0.clone(), None).unwrap();
        assert_eq!(p, p0);
        assert!(log.is_empty());
    }

    #[test]
    fn divergence_aborts_and_keeps_last_finite_checkpoint() {
        let env = NavEnvConfig::default();
        let c = cfg(Formulation::Cumulative, 1.0);
        // weights this large overflow the mean to infinity on the first step
        let mut huge = small_policy();
        huge.theta_mut().iter_mut().for_each(|v| *v = f64::MAX);
        let dir = std::env::temp_dir().join(format!("safepg-abort-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("checkpoint.txt");
        let err = train(&c, &env, huge, Some(&path)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let saved = RbfGaussianPolicy::load(&path).unwrap();
        assert!(saved.theta().iter().all(|v| v.is_finite()));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let env = NavEnvConfig::default();
        for bad in [
            TrainConfig {
                eta: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                log_every: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                grad_clip: Some(0.0),
                ..TrainConfig::default()
            },
        ] {
            assert!(train(&bad, &env, small_policy(), None).is_err());
        }
    }

    /// Two-step toy: `J(θ) = E[r(S_0) + r(S_1)]` with `S_1 = s0 + a T_s`
    /// (no clipping), so `∇_θ J = -2 T_s (s0 + μ T_s − g) ⊗ φ(s0)`.
    #[test]
    fn expected_update_points_along_exact_gradient() {
        let env = NavEnvConfig {
            obstacles: vec![],
            horizon: 2,
            start: [5.0, 5.0],
            goal: [6.0, 4.0],
            step_scale: 1.0,
            ..NavEnvConfig::default()
        };
        let policy = small_policy();
        let phi = policy.features(&env.start);
        let mu = policy.mean(&env.start);
        let mut exact = policy.zero_gradient();
        for (k, f) in phi.iter().enumerate() {
            for j in 0..2 {
                exact[2 * k + j] = -2.0 * env.step_scale * (env.start[j] + mu[j] * env.step_scale - env.goal[j]) * f;
            }
        }
        let c = TrainConfig {
            eta: 1.0,
            ..cfg(Formulation::Cumulative, 0.0)
        };
        let mut rng = RngStream::new(12, 0);
        let n = 10_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for iter in 0..n {
            let mut p = policy.clone();
            train_step_cumulative(&mut p, &c, &env, &mut rng, iter).unwrap();
            let step: Vec<f64> = p.theta().iter().zip(policy.theta()).map(|(a, b)| a - b).collect();
            let proj: f64 = step.iter().zip(exact.as_slice()).map(|(a, b)| a * b).sum();
            sum += proj;
            sum_sq += proj * proj;
        }
        let mean = sum / n as f64;
        let stderr = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean > 3.0 * stderr, "mean {mean} stderr {stderr}");
    }
}
