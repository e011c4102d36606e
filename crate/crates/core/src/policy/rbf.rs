use std::fmt::Write as _;
use std::path::Path;

use crate::env::{NavPolicy, Point};
use crate::error::{Error, Result};
use crate::grad::GradientVector;
use crate::policy::ScoreFunction;
use crate::rng::RngStream;

/// Kernels below this value are dropped when the cutoff is enabled.
pub const FEATURE_CUTOFF: f64 = 1e-8;

/// Square lattice of kernel centers starting at `origin`.
///
/// Center `k = ix · per_axis + iy` sits at `origin + (ix, iy) · spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfLattice {
    pub origin: Point,
    pub spacing: f64,
    pub per_axis: usize,
}

impl RbfLattice {
    /// Lattice covering `[origin, origin + extent]²` with the given spacing.
    pub fn covering(origin: Point, extent: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(extent > 0.0) {
            return Err(Error::Config("lattice spacing and extent must be positive".into()));
        }
        let per_axis = (extent / spacing + 1e-9).floor() as usize + 1;
        Ok(Self {
            origin,
            spacing,
            per_axis,
        })
    }

    pub fn len(&self) -> usize {
        self.per_axis * self.per_axis
    }

    pub fn is_empty(&self) -> bool {
        self.per_axis == 0
    }

    pub fn center(&self, k: usize) -> Point {
        let (ix, iy) = (k / self.per_axis, k % self.per_axis);
        [
            self.origin[0] + ix as f64 * self.spacing,
            self.origin[1] + iy as f64 * self.spacing,
        ]
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }
}

/// Gaussian policy whose mean is a linear combination of radial basis
/// functions: `a ~ N(θᵀφ(s), diag(cov))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfGaussianPolicy {
    lattice: RbfLattice,
    bandwidth: f64,
    cov: [f64; 2],
    /// `d × 2`, row-major: `theta[2k + j]` weights kernel `k` in action dim `j`.
    theta: Vec<f64>,
    cutoff: bool,
}

impl RbfGaussianPolicy {
    /// Zero-initialized policy.
    pub fn new(lattice: RbfLattice, bandwidth: f64, cov: [f64; 2]) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::Config("RBF bandwidth must be positive".into()));
        }
        if !(cov[0] > 0.0 && cov[1] > 0.0) {
            return Err(Error::Config("action covariance entries must be positive".into()));
        }
        if lattice.is_empty() {
            return Err(Error::Config("RBF lattice is empty".into()));
        }
        Ok(Self {
            theta: vec![0.0; 2 * lattice.len()],
            lattice,
            bandwidth,
            cov,
            cutoff: false,
        })
    }

    /// Lattice over `[0,10]²` at spacing 0.25 (1681 kernels), σ = 0.5,
    /// Σ = diag(0.5, 0.5).
    pub fn navigation_default() -> Self {
        let lattice = RbfLattice::covering([0.0, 0.0], 10.0, 0.25).expect("valid lattice");
        Self::new(lattice, 0.5, [0.5, 0.5]).expect("valid policy")
    }

    pub fn with_cutoff(mut self, cutoff: bool) -> Self {
        self.cutoff = cutoff;
        self
    }

    /// Moves the lattice to a new origin, keeping `θ`; checkpoints do not
    /// record the origin.
    pub fn with_lattice_origin(mut self, origin: Point) -> Self {
        self.lattice.origin = origin;
        self
    }

    pub fn lattice(&self) -> &RbfLattice {
        &self.lattice
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn cov(&self) -> [f64; 2] {
        self.cov
    }

    pub fn num_kernels(&self) -> usize {
        self.lattice.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta = theta;
        Ok(())
    }

    /// `θ ← θ + step · direction`.
    pub fn ascend(&mut self, step: f64, direction: &GradientVector) -> Result<()> {
        if direction.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                got: direction.len(),
            });
        }
        for (t, g) in self.theta.iter_mut().zip(direction.as_slice()) {
            *t += step * g;
        }
        Ok(())
    }

    /// Per-axis kernel factors; `φ_k(s)` is the product of the two.
    fn axis_factors(&self, s: &Point) -> (Vec<f64>, Vec<f64>) {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let n = self.lattice.per_axis;
        let factor = |axis: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let d = s[axis] - (self.lattice.origin[axis] + i as f64 * self.lattice.spacing);
                    (-d * d * inv).exp()
                })
                .collect()
        };
        (factor(0), factor(1))
    }

    /// Calls `f(k, φ_k)` for every kernel that contributes.
    fn for_each_feature(&self, s: &Point, mut f: impl FnMut(usize, f64)) {
        let (fx, fy) = self.axis_factors(s);
        let n = self.lattice.per_axis;
        for (ix, &ex) in fx.iter().enumerate() {
            if self.cutoff && ex < FEATURE_CUTOFF {
                continue;
            }
            let base = ix * n;
            for (iy, &ey) in fy.iter().enumerate() {
                let phi = ex * ey;
                if self.cutoff && phi < FEATURE_CUTOFF {
                    continue;
                }
                f(base + iy, phi);
            }
        }
    }

    /// `φ(s)`, one entry per kernel.
    pub fn features(&self, s: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.num_kernels()];
        self.for_each_feature(s, |k, phi| out[k] = phi);
        out
    }

    /// `μ_θ(s) = θᵀφ(s)`.
    pub fn mean(&self, s: &Point) -> Point {
        let mut m = [0.0; 2];
        self.for_each_feature(s, |k, phi| {
            m[0] += self.theta[2 * k] * phi;
            m[1] += self.theta[2 * k + 1] * phi;
        });
        m
    }

    pub fn sample_action(&self, s: &Point, rng: &mut RngStream) -> Point {
        let m = self.mean(s);
        let z0 = rng.normal();
        let z1 = rng.normal();
        [m[0] + self.cov[0].sqrt() * z0, m[1] + self.cov[1].sqrt() * z1]
    }

    /// Log-density of a bivariate Gaussian with diagonal covariance.
    pub fn log_prob(&self, s: &Point, a: &Point) -> f64 {
        let m = self.mean(s);
        let quad = (a[0] - m[0]).powi(2) / self.cov[0] + (a[1] - m[1]).powi(2) / self.cov[1];
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * (self.cov[0] * self.cov[1]).ln() - 0.5 * quad
    }

    /// Serializes to the checkpoint text format.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::with_capacity(48 * self.num_kernels() + 64);
        let _ = writeln!(
            out,
            "rbf d={} sigma={} cov={},{} spacing={}",
            self.num_kernels(),
            self.bandwidth,
            self.cov[0],
            self.cov[1],
            self.lattice.spacing
        );
        for row in self.theta.chunks_exact(2) {
            let _ = writeln!(out, "{:.16e} {:.16e}", row[0], row[1]);
        }
        out
    }

    /// Parses the checkpoint text format; the lattice is anchored at the origin.
    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty checkpoint"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("rbf") {
            return Err(Error::parse(1, "checkpoint must start with `rbf`"));
        }
        let (mut d, mut sigma, mut cov, mut spacing) = (None, None, None, None);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("malformed header field `{field}`")))?;
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(1, format!("bad number `{v}` for `{key}`")))
            };
            match key {
                "d" => {
                    d = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| Error::parse(1, format!("bad kernel count `{value}`")))?,
                    )
                }
                "sigma" => sigma = Some(num(value)?),
                "spacing" => spacing = Some(num(value)?),
                "cov" => {
                    let (x, y) = value
                        .split_once(',')
                        .ok_or_else(|| Error::parse(1, "cov must be `<cx>,<cy>`"))?;
                    cov = Some([num(x)?, num(y)?]);
                }
                other => return Err(Error::parse(1, format!("unknown header field `{other}`"))),
            }
        }
        let missing = |name: &str| Error::parse(1, format!("header is missing `{name}`"));
        let d = d.ok_or_else(|| missing("d"))?;
        let sigma = sigma.ok_or_else(|| missing("sigma"))?;
        let cov = cov.ok_or_else(|| missing("cov"))?;
        let spacing = spacing.ok_or_else(|| missing("spacing"))?;
        let per_axis = (d as f64).sqrt().round() as usize;
        if per_axis * per_axis != d {
            return Err(Error::parse(1, format!("d={d} is not a square lattice")));
        }
        let lattice = RbfLattice {
            origin: [0.0, 0.0],
            spacing,
            per_axis,
        };
        let mut policy = Self::new(lattice, sigma, cov)?;
        let mut theta = Vec::with_capacity(2 * d);
        for (idx, line) in lines {
            let mut parts = line.split_whitespace();
            for _ in 0..2 {
                let v = parts
                    .next()
                    .ok_or_else(|| Error::parse(idx + 1, "expected two weights"))?;
                theta.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(idx + 1, format!("bad weight `{v}`")))?,
                );
            }
            if parts.next().is_some() {
                return Err(Error::parse(idx + 1, "expected two weights"));
            }
        }
        if theta.len() != 2 * d {
            return Err(Error::parse(
                0,
                format!("expected {d} weight rows, found {}", theta.len() / 2),
            ));
        }
        policy.theta = theta;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

impl ScoreFunction<Point, Point> for RbfGaussianPolicy {
    fn param_shape(&self) -> (usize, usize) {
        (self.num_kernels(), 2)
    }

    /// `∂ log π / ∂θ_{k,j} = φ_k(s) [Σ⁻¹(a − μ_θ(s))]_j`.
    fn add_score(&self, state: &Point, action: &Point, _t: usize, weight: f64, out: &mut GradientVector) {
        let (fx, fy) = self.axis_factors(state);
        let n = self.lattice.per_axis;
        let mut m = [0.0; 2];
        for (ix, &ex) in fx.iter().enumerate() {
            for (iy, &ey) in fy.iter().enumerate() {
                let phi = ex * ey;
                if self.cutoff && phi < FEATURE_CUTOFF {
                    continue;
                }
                let k = ix * n + iy;
                m[0] += self.theta[2 * k] * phi;
                m[1] += self.theta[2 * k + 1] * phi;
            }
        }
        let c0 = weight * (action[0] - m[0]) / self.cov[0];
        let c1 = weight * (action[1] - m[1]) / self.cov[1];
        let g = out.as_mut_slice();
        for (ix, &ex) in fx.iter().enumerate() {
            for (iy, &ey) in fy.iter().enumerate() {
                let phi = ex * ey;
                if self.cutoff && phi < FEATURE_CUTOFF {
                    continue;
                }
                let k = ix * n + iy;
                g[2 * k] += c0 * phi;
                g[2 * k + 1] += c1 * phi;
            }
        }
    }
}

impl NavPolicy for RbfGaussianPolicy {
    fn act(&self, state: &Point, rng: &mut RngStream) -> Point {
        self.sample_action(state, rng)
    }
}
