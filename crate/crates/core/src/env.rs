//! Two-dimensional navigation among circular obstacles.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::trajectory::Trajectory;

pub type Point = [f64; 2];

const MAX_REJECTIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavEnvConfig {
    /// Lower and upper corners of the state box.
    pub bounds: [Point; 2],
    pub obstacles: Vec<Obstacle>,
    pub goal: Point,
    pub horizon: usize,
    /// Euler step `T_s`.
    pub step_scale: f64,
    pub start: Point,
}

impl Default for NavEnvConfig {
    fn default() -> Self {
        let obstacle = |x, y, radius| Obstacle { center: [x, y], radius };
        Self {
            bounds: [[0.0, 0.0], [10.0, 10.0]],
            obstacles: vec![
                obstacle(7.0, 7.0, 2.0),
                obstacle(3.0, 7.0, 1.0),
                obstacle(1.5, 4.0, 0.5),
                obstacle(4.5, 3.0, 1.5),
                obstacle(8.0, 3.0, 0.75),
            ],
            goal: [9.0, 1.5],
            horizon: 20,
            step_scale: 0.05,
            start: [1.0, 8.5],
        }
    }
}

/// Anything that can pick an action in the navigation task.
pub trait NavPolicy {
    fn act(&self, state: &Point, rng: &mut RngStream) -> Point;
}

impl<F: Fn(&Point, &mut RngStream) -> Point> NavPolicy for F {
    fn act(&self, state: &Point, rng: &mut RngStream) -> Point {
        self(state, rng)
    }
}

impl NavEnvConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bounds;
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(Error::Config("bounds must have positive extent".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.step_scale > 0.0) {
            return Err(Error::Config("step_scale must be positive".into()));
        }
        if let Some(o) = self.obstacles.iter().find(|o| !(o.radius > 0.0)) {
            return Err(Error::Config(format!(
                "obstacle at {:?} has non-positive radius",
                o.center
            )));
        }
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !self.in_bounds(&p) {
                return Err(Error::Config(format!("{name} {p:?} lies outside the bounds")));
            }
            if !self.is_safe(&p) {
                return Err(Error::Config(format!("{name} {p:?} lies inside an obstacle")));
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, s: &Point) -> bool {
        let [lo, hi] = self.bounds;
        (0..2).all(|i| s[i] >= lo[i] && s[i] <= hi[i])
    }

    /// Unsafe iff strictly inside some obstacle; the rim is safe.
    pub fn is_safe(&self, s: &Point) -> bool {
        self.obstacles.iter().all(|o| {
            let dx = s[0] - o.center[0];
            let dy = s[1] - o.center[1];
            dx * dx + dy * dy >= o.radius * o.radius
        })
    }

    /// `clip(s + a·T_s)` to the box.
    pub fn step(&self, s: &Point, a: &Point) -> Point {
        let [lo, hi] = self.bounds;
        let mut next = [0.0; 2];
        for i in 0..2 {
            next[i] = (s[i] + a[i] * self.step_scale).clamp(lo[i], hi[i]);
        }
        next
    }

    /// Negative squared distance to the goal.
    pub fn reward(&self, s: &Point) -> f64 {
        let dx = s[0] - self.goal[0];
        let dy = s[1] - self.goal[1];
        -(dx * dx + dy * dy)
    }

    /// Rejection-samples a uniform point of the safe set.
    pub fn sample_safe_uniform(&self, rng: &mut RngStream) -> Result<Point> {
        let [lo, hi] = self.bounds;
        for _ in 0..MAX_REJECTIONS {
            let p = [rng.uniform_range(lo[0], hi[0]), rng.uniform_range(lo[1], hi[1])];
            if self.is_safe(&p) {
                return Ok(p);
            }
        }
        Err(Error::Config(format!(
            "no safe point found in {MAX_REJECTIONS} proposals; the safe set is degenerate"
        )))
    }

    /// Runs one full-horizon episode. Violations do not end the episode.
    pub fn rollout<P: NavPolicy + ?Sized>(
        &self,
        policy: &P,
        s0: Point,
        rng: &mut RngStream,
    ) -> Result<Trajectory<Point, Point>> {
        if !self.in_bounds(&s0) {
            return Err(Error::Precondition(format!("initial state {s0:?} outside bounds")));
        }
        let horizon = self.horizon;
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        let mut safe_flags = Vec::with_capacity(horizon + 1);
        let mut s = s0;
        for _ in 0..horizon {
            let a = policy.act(&s, rng);
            states.push(s);
            safe_flags.push(self.is_safe(&s));
            rewards.push(self.reward(&s));
            actions.push(a);
            s = self.step(&s, &a);
        }
        states.push(s);
        safe_flags.push(self.is_safe(&s));
        Trajectory::new(states, actions, rewards, safe_flags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = NavEnvConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.obstacles.len(), 5);
        let radii: Vec<f64> = cfg.obstacles.iter().map(|o| o.radius).collect();
        assert_eq!(radii, vec![2.0, 1.0, 0.5, 1.5, 0.75]);
        assert_eq!(cfg.horizon, 20);
        assert_eq!(cfg.step_scale, 0.05);
    }

    #[test]
    fn safety_examples() {
        let cfg = NavEnvConfig::default();
        assert!(!cfg.is_safe(&[7.0, 7.0]));
        assert!(cfg.is_safe(&[0.0, 0.0]));
        assert!(cfg.is_safe(&[5.0, 7.0]));
        assert!(!cfg.is_safe(&[5.0 + 1e-9, 7.0]));
    }

    #[test]
    fn origin_distance_oracle() {
        // brute-force nearest-obstacle margin at the origin
        let cfg = NavEnvConfig::default();
        let min_margin = cfg
            .obstacles
            .iter()
            .map(|o| (o.center[0].powi(2) + o.center[1].powi(2)).sqrt() - o.radius)
            .fold(f64::INFINITY, f64::min);
        assert!(min_margin > 0.0);
        let d = (1.5f64.powi(2) + 4.0f64.powi(2)).sqrt();
        assert!((d - 4.272).abs() < 1e-3);
    }

    #[test]
    fn step_examples() {
        let cfg = NavEnvConfig::default();
        assert!(close(cfg.step(&[1.0, 8.5], &[2.0, -1.0]), [1.1, 8.45]));
        assert_eq!(cfg.step(&[0.1, 9.9], &[-40.0, 40.0]), [0.0, 10.0]);
        assert_eq!(cfg.step(&[5.0, 5.0], &[0.0, 0.0]), [5.0, 5.0]);
    }

    #[test]
    fn reward_examples() {
        let cfg = NavEnvConfig::default();
        assert_eq!(cfg.reward(&[9.0, 1.5]), 0.0);
        assert_eq!(cfg.reward(&[8.0, 1.5]), -1.0);
        assert_eq!(cfg.reward(&[1.0, 8.5]), -113.0);
    }

    #[test]
    fn obstacle_order_does_not_matter() {
        let cfg = NavEnvConfig::default();
        let mut rev = cfg.clone();
        rev.obstacles.reverse();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..5000 {
            let p = [rng.uniform_range(0.0, 10.0), rng.uniform_range(0.0, 10.0)];
            assert_eq!(cfg.is_safe(&p), rev.is_safe(&p));
        }
    }

    #[test]
    fn step_stays_in_bounds_and_reward_nonpositive() {
        let cfg = NavEnvConfig::default();
        let mut rng = RngStream::new(9, 0);
        for _ in 0..5000 {
            let s = [rng.uniform_range(0.0, 10.0), rng.uniform_range(0.0, 10.0)];
            let a = [rng.normal() * 100.0, rng.normal() * 100.0];
            let n = cfg.step(&s, &a);
            assert!(cfg.in_bounds(&n));
            assert!(cfg.reward(&n) <= 0.0);
        }
    }

    #[test]
    fn acceptance_rate_matches_area() {
        let cfg = NavEnvConfig::default();
        let area: f64 = cfg
            .obstacles
            .iter()
            .map(|o| std::f64::consts::PI * o.radius * o.radius)
            .sum();
        let expected = 1.0 - area / 100.0;
        assert!((expected - 0.747).abs() < 1e-3);
        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let accepted = (0..n)
            .filter(|_| cfg.is_safe(&[rng.uniform_range(0.0, 10.0), rng.uniform_range(0.0, 10.0)]))
            .count();
        let rate = accepted as f64 / n as f64;
        assert!((rate - expected).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn sampled_points_are_safe() {
        let cfg = NavEnvConfig::default();
        let mut rng = RngStream::new(2, 0);
        for _ in 0..2000 {
            let p = cfg.sample_safe_uniform(&mut rng).unwrap();
            assert!(cfg.is_safe(&p) && cfg.in_bounds(&p));
        }
    }

    #[test]
    fn covered_box_is_a_config_error() {
        let cfg = NavEnvConfig {
            obstacles: vec![Obstacle {
                center: [5.0, 5.0],
                radius: 8.0,
            }],
            ..NavEnvConfig::default()
        };
        let mut rng = RngStream::new(2, 0);
        assert!(matches!(cfg.sample_safe_uniform(&mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn zero_policy_rollout() {
        let cfg = NavEnvConfig::default();
        let zero = |_: &Point, _: &mut RngStream| [0.0, 0.0];
        let mut rng = RngStream::new(1, 0);
        let traj = cfg.rollout(&zero, cfg.start, &mut rng).unwrap();
        assert_eq!(traj.safe_flags().len(), 21);
        assert!(traj.states().iter().all(|s| *s == [1.0, 8.5]));
        assert_eq!(traj.total_reward(), -2260.0);
    }
}
