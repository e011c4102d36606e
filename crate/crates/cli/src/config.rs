//! INI-style run configuration.
//!
//! ```text
//! # comment
//! [env]
//! obstacles = (7,7,2),(3,7,1)
//! [train]
//! eta = 0.002
//! ```
//!
//! Fields are resolved as defaults, then `SAFEPG_SEED` for seed fields, then
//! the file, then command-line flags.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use safepg::oracle::VcScale;
use safepg::sweep::SweepGrid;
use safepg::trainer::{Formulation, StartMode, TrainConfig};
use safepg::{NavEnvConfig, Obstacle, Point, RbfGaussianPolicy, RbfLattice};

pub const SEED_ENV: &str = "SAFEPG_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    /// 1-based; 0 when the failing field was not set in the file.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: `{}`: {}", self.file, self.line, self.key, self.message)
        } else {
            write!(f, "{}: `{}`: {}", self.file, self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub spacing: f64,
    pub bandwidth: f64,
    pub cov: [f64; 2],
    pub cutoff: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            spacing: 0.25,
            bandwidth: 0.5,
            cov: [0.5, 0.5],
            cutoff: false,
        }
    }
}

impl PolicyConfig {
    /// Zero policy whose lattice covers the environment box.
    pub fn build(&self, env: &NavEnvConfig) -> safepg::Result<RbfGaussianPolicy> {
        let [lo, hi] = env.bounds;
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let lattice = RbfLattice::covering(lo, extent, self.spacing)?;
        Ok(RbfGaussianPolicy::new(lattice, self.bandwidth, self.cov)?.with_cutoff(self.cutoff))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Checkpoint to evaluate; `<out>/checkpoint.txt` when unset.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub weights: Vec<f64>,
    pub formulations: Vec<Formulation>,
    pub seeds: Vec<u64>,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub start_mode: StartMode,
    /// Step size for every cell unless `eta_by_weight` names the weight.
    pub eta: f64,
    pub eta_by_weight: Vec<(f64, f64)>,
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let grid = SweepGrid::default_grid();
        Self {
            weights: grid.weights,
            formulations: grid.formulations,
            seeds: grid.seeds,
            train_episodes: 10_000,
            eval_episodes: 500,
            start_mode: StartMode::UniformSafe,
            eta: 0.002,
            eta_by_weight: Vec::new(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub seed: u64,
    pub instances: usize,
    pub samples: usize,
    pub dual_instances: usize,
    pub xi_points: usize,
    pub lambda_max: f64,
    pub vc_scale: VcScale,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            instances: 25,
            samples: 10_000,
            dual_instances: 10,
            xi_points: 11,
            lambda_max: 1e3,
            vc_scale: VcScale::Normalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    /// Record wall-clock columns; off keeps every output byte-reproducible.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: NavEnvConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: NavEnvConfig::default(),
            policy: PolicyConfig::default(),
            train: TrainConfig {
                wall_clock: false,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Where each resolved field came from, for error reporting.
#[derive(Debug, Default)]
struct Origins(Vec<(String, usize)>);

impl Origins {
    fn line(&self, key: &str) -> usize {
        self.0.iter().rev().find(|(k, _)| k == key).map_or(0, |(_, l)| *l)
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("expected a number, found `{}`", v.trim()))?;
    if !x.is_finite() {
        return Err(format!("expected a finite number, found `{}`", v.trim()));
    }
    Ok(x)
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("expected a non-negative integer, found `{}`", v.trim()))
}

fn parse_u64(v: &str) -> Result<u64, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("expected a non-negative integer, found `{}`", v.trim()))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected `true` or `false`, found `{other}`")),
    }
}

/// `(a,b,...),(c,d,...)` with every tuple of length `arity`.
fn parse_tuples(v: &str, arity: usize) -> Result<Vec<Vec<f64>>, String> {
    let mut out = Vec::new();
    let mut rest = v.trim();
    while !rest.is_empty() {
        let body = rest
            .strip_prefix('(')
            .ok_or_else(|| format!("expected `(` at `{rest}`"))?;
        let close = body.find(')').ok_or("unclosed `(`")?;
        let values = body[..close].split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
        if values.len() != arity {
            return Err(format!("expected {arity} values per tuple, found {}", values.len()));
        }
        out.push(values);
        rest = body[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err("trailing comma".into());
            }
        } else if !rest.is_empty() {
            return Err(format!("expected `,` between tuples at `{rest}`"));
        }
    }
    Ok(out)
}

fn parse_point(v: &str) -> Result<Point, String> {
    match parse_tuples(v, 2)?.as_slice() {
        [p] => Ok([p[0], p[1]]),
        _ => Err("expected a single `(x,y)` pair".into()),
    }
}

fn parse_list<T>(v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(item).collect()
}

fn parse_formulation(v: &str) -> Result<Formulation, String> {
    v.trim().parse().map_err(|e: safepg::Error| e.to_string())
}

fn parse_start_mode(v: &str) -> Result<StartMode, String> {
    v.trim().parse().map_err(|e: safepg::Error| e.to_string())
}

fn parse_vc_scale(v: &str) -> Result<VcScale, String> {
    match v.trim() {
        "normalized" => Ok(VcScale::Normalized),
        "count" => Ok(VcScale::Count),
        other => Err(format!("expected `normalized` or `count`, found `{other}`")),
    }
}

fn vc_scale_str(s: VcScale) -> &'static str {
    match s {
        VcScale::Normalized => "normalized",
        VcScale::Count => "count",
    }
}

impl RunConfig {
    /// Applies one `section.key = value` assignment.
    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), String> {
        match (section, key) {
            ("env", "bounds") => {
                let t = parse_tuples(v, 2)?;
                if t.len() != 2 {
                    return Err("expected `(x_lo,y_lo),(x_hi,y_hi)`".into());
                }
                self.env.bounds = [[t[0][0], t[0][1]], [t[1][0], t[1][1]]];
            }
            ("env", "obstacles") => {
                self.env.obstacles = parse_tuples(v, 3)?
                    .into_iter()
                    .map(|t| Obstacle {
                        center: [t[0], t[1]],
                        radius: t[2],
                    })
                    .collect();
            }
            ("env", "goal") => self.env.goal = parse_point(v)?,
            ("env", "start") => self.env.start = parse_point(v)?,
            ("env", "horizon") => self.env.horizon = parse_usize(v)?,
            ("env", "step_scale") => self.env.step_scale = parse_f64(v)?,

            ("policy", "spacing") => self.policy.spacing = parse_f64(v)?,
            ("policy", "bandwidth") => self.policy.bandwidth = parse_f64(v)?,
            ("policy", "cov") => self.policy.cov = parse_point(v)?,
            ("policy", "cutoff") => self.policy.cutoff = parse_bool(v)?,

            ("train", "formulation") => self.train.formulation = parse_formulation(v)?,
            ("train", "weight") => self.train.weight = parse_f64(v)?,
            ("train", "eta") => self.train.eta = parse_f64(v)?,
            ("train", "episodes") => self.train.episodes = parse_usize(v)?,
            ("train", "batch_size") => self.train.batch_size = parse_usize(v)?,
            ("train", "seed") => self.train.seed = parse_u64(v)?,
            ("train", "start_mode") => self.train.start_mode = parse_start_mode(v)?,
            ("train", "terminal_bonus") => self.train.terminal_bonus = parse_bool(v)?,
            ("train", "log_every") => self.train.log_every = parse_usize(v)?,
            ("train", "grad_clip") => {
                self.train.grad_clip = match v.trim() {
                    "none" => None,
                    x => Some(parse_f64(x)?),
                }
            }
            ("train", "baseline") => self.train.baseline = parse_bool(v)?,
            ("train", "checkpoint_every") => self.train.checkpoint_every = parse_usize(v)?,

            ("eval", "episodes") => self.eval.episodes = parse_usize(v)?,
            ("eval", "checkpoint") => {
                self.eval.checkpoint = match v.trim() {
                    "" => None,
                    path => Some(PathBuf::from(path)),
                }
            }

            ("sweep", "weights") => self.sweep.weights = parse_list(v, parse_f64)?,
            ("sweep", "formulations") => self.sweep.formulations = parse_list(v, parse_formulation)?,
            ("sweep", "seeds") => self.sweep.seeds = parse_list(v, parse_u64)?,
            ("sweep", "train_episodes") => self.sweep.train_episodes = parse_usize(v)?,
            ("sweep", "eval_episodes") => self.sweep.eval_episodes = parse_usize(v)?,
            ("sweep", "start_mode") => self.sweep.start_mode = parse_start_mode(v)?,
            ("sweep", "eta") => self.sweep.eta = parse_f64(v)?,
            ("sweep", "eta_by_weight") => {
                self.sweep.eta_by_weight = parse_tuples(v, 2)?.into_iter().map(|t| (t[0], t[1])).collect()
            }
            ("sweep", "jobs") => self.sweep.jobs = parse_usize(v)?,

            ("oracle", "seed") => self.oracle.seed = parse_u64(v)?,
            ("oracle", "instances") => self.oracle.instances = parse_usize(v)?,
            ("oracle", "samples") => self.oracle.samples = parse_usize(v)?,
            ("oracle", "dual_instances") => self.oracle.dual_instances = parse_usize(v)?,
            ("oracle", "xi_points") => self.oracle.xi_points = parse_usize(v)?,
            ("oracle", "lambda_max") => self.oracle.lambda_max = parse_f64(v)?,
            ("oracle", "vc_scale") => self.oracle.vc_scale = parse_vc_scale(v)?,

            ("output", "timing") => self.output.timing = parse_bool(v)?,

            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Seeds every seed field; used for the `SAFEPG_SEED` fallback and `--seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.oracle.seed = seed;
        let n = self.sweep.seeds.len().max(1) as u64;
        self.sweep.seeds = (0..n).map(|i| seed.wrapping_add(i)).collect();
    }

    /// Cross-field checks, reported against the key that owns the failing
    /// field.
    fn validate(&self) -> Result<(), (&'static str, String)> {
        let e = &self.env;
        let [lo, hi] = e.bounds;
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(("env.bounds", "must have positive extent".into()));
        }
        if e.horizon == 0 {
            return Err(("env.horizon", "must be at least 1".into()));
        }
        if !(e.step_scale > 0.0) {
            return Err(("env.step_scale", "must be positive".into()));
        }
        if e.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return Err(("env.obstacles", "radii must be positive".into()));
        }
        for (key, p) in [("env.start", e.start), ("env.goal", e.goal)] {
            if !e.in_bounds(&p) {
                return Err((key, format!("{p:?} lies outside the bounds")));
            }
            if !e.is_safe(&p) {
                return Err((key, format!("{p:?} lies inside an obstacle")));
            }
        }
        e.validate().map_err(|e| ("env", e.to_string()))?;
        let p = &self.policy;
        if !(p.spacing > 0.0) {
            return Err(("policy.spacing", "must be positive".into()));
        }
        if !(p.bandwidth > 0.0) {
            return Err(("policy.bandwidth", "must be positive".into()));
        }
        if !(p.cov[0] > 0.0 && p.cov[1] > 0.0) {
            return Err(("policy.cov", "entries must be positive".into()));
        }
        let t = &self.train;
        if !(t.eta > 0.0) {
            return Err(("train.eta", format!("must be positive, found {}", t.eta)));
        }
        if !(t.weight >= 0.0) {
            return Err(("train.weight", format!("must be non-negative, found {}", t.weight)));
        }
        if t.episodes == 0 {
            return Err(("train.episodes", "must be at least 1".into()));
        }
        if t.batch_size == 0 {
            return Err(("train.batch_size", "must be at least 1".into()));
        }
        if t.log_every == 0 {
            return Err(("train.log_every", "must be at least 1".into()));
        }
        if let Some(c) = t.grad_clip {
            if !(c > 0.0) {
                return Err(("train.grad_clip", "must be positive or `none`".into()));
            }
        }
        t.validate().map_err(|e| ("train", e.to_string()))?;
        if self.eval.episodes == 0 {
            return Err(("eval.episodes", "must be at least 1".into()));
        }
        let s = &self.sweep;
        if s.weights.is_empty() {
            return Err(("sweep.weights", "must not be empty".into()));
        }
        if s.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(("sweep.weights", "weights must be non-negative".into()));
        }
        if s.formulations.is_empty() {
            return Err(("sweep.formulations", "must not be empty".into()));
        }
        if s.seeds.is_empty() {
            return Err(("sweep.seeds", "must not be empty".into()));
        }
        if s.train_episodes == 0 {
            return Err(("sweep.train_episodes", "must be at least 1".into()));
        }
        if s.eval_episodes == 0 {
            return Err(("sweep.eval_episodes", "must be at least 1".into()));
        }
        if !(s.eta > 0.0) || s.eta_by_weight.iter().any(|(_, e)| !(*e > 0.0)) {
            return Err(("sweep.eta", "step sizes must be positive".into()));
        }
        if !s.train_episodes.is_multiple_of(t.batch_size) {
            return Err((
                "sweep.train_episodes",
                format!("must be a multiple of train.batch_size = {}", t.batch_size),
            ));
        }
        if s.jobs == 0 {
            return Err(("sweep.jobs", "must be at least 1".into()));
        }
        let o = &self.oracle;
        if o.instances == 0 {
            return Err(("oracle.instances", "must be at least 1".into()));
        }
        if o.samples == 0 {
            return Err(("oracle.samples", "must be at least 1".into()));
        }
        if o.xi_points < 2 {
            return Err((
                "oracle.xi_points",
                "must be at least 2 to include both endpoints".into(),
            ));
        }
        if !(o.lambda_max > 0.0) {
            return Err(("oracle.lambda_max", "must be positive".into()));
        }
        Ok(())
    }

    /// Writes every field in the input format; parsing the result gives back
    /// an equal configuration.
    pub fn to_text(&self) -> String {
        fn pts(p: &[Point]) -> String {
            p.iter()
                .map(|p| format!("({:?},{:?})", p[0], p[1]))
                .collect::<Vec<_>>()
                .join(",")
        }
        fn list<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let e = &self.env;
        let mut s = String::new();
        let _ = writeln!(s, "[env]");
        let _ = writeln!(s, "bounds = {}", pts(&e.bounds));
        let obstacles: Vec<String> = e
            .obstacles
            .iter()
            .map(|o| format!("({:?},{:?},{:?})", o.center[0], o.center[1], o.radius))
            .collect();
        let _ = writeln!(s, "obstacles = {}", obstacles.join(","));
        let _ = writeln!(s, "goal = {}", pts(&[e.goal]));
        let _ = writeln!(s, "start = {}", pts(&[e.start]));
        let _ = writeln!(s, "horizon = {}", e.horizon);
        let _ = writeln!(s, "step_scale = {:?}", e.step_scale);

        let p = &self.policy;
        let _ = writeln!(s, "\n[policy]");
        let _ = writeln!(s, "spacing = {:?}", p.spacing);
        let _ = writeln!(s, "bandwidth = {:?}", p.bandwidth);
        let _ = writeln!(s, "cov = {}", pts(&[p.cov]));
        let _ = writeln!(s, "cutoff = {}", p.cutoff);

        let t = &self.train;
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "formulation = {}", t.formulation);
        let _ = writeln!(s, "weight = {:?}", t.weight);
        let _ = writeln!(s, "eta = {:?}", t.eta);
        let _ = writeln!(s, "episodes = {}", t.episodes);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "start_mode = {}", t.start_mode.as_str());
        let _ = writeln!(s, "terminal_bonus = {}", t.terminal_bonus);
        let _ = writeln!(s, "log_every = {}", t.log_every);
        let _ = writeln!(
            s,
            "grad_clip = {}",
            t.grad_clip.map_or("none".to_string(), |c| format!("{c:?}"))
        );
        let _ = writeln!(s, "baseline = {}", t.baseline);
        let _ = writeln!(s, "checkpoint_every = {}", t.checkpoint_every);

        let _ = writeln!(s, "\n[eval]");
        let _ = writeln!(s, "episodes = {}", self.eval.episodes);
        if let Some(path) = &self.eval.checkpoint {
            let _ = writeln!(s, "checkpoint = {}", path.display());
        }

        let w = &self.sweep;
        let weights: Vec<String> = w.weights.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "\n[sweep]");
        let _ = writeln!(s, "weights = {}", weights.join(","));
        let _ = writeln!(s, "formulations = {}", list(&w.formulations));
        let _ = writeln!(s, "seeds = {}", list(&w.seeds));
        let _ = writeln!(s, "train_episodes = {}", w.train_episodes);
        let _ = writeln!(s, "eval_episodes = {}", w.eval_episodes);
        let _ = writeln!(s, "start_mode = {}", w.start_mode.as_str());
        let _ = writeln!(s, "eta = {:?}", w.eta);
        let overrides: Vec<String> = w.eta_by_weight.iter().map(|(a, b)| format!("({a:?},{b:?})")).collect();
        let _ = writeln!(s, "eta_by_weight = {}", overrides.join(","));
        let _ = writeln!(s, "jobs = {}", w.jobs);

        let o = &self.oracle;
        let _ = writeln!(s, "\n[oracle]");
        let _ = writeln!(s, "seed = {}", o.seed);
        let _ = writeln!(s, "instances = {}", o.instances);
        let _ = writeln!(s, "samples = {}", o.samples);
        let _ = writeln!(s, "dual_instances = {}", o.dual_instances);
        let _ = writeln!(s, "xi_points = {}", o.xi_points);
        let _ = writeln!(s, "lambda_max = {:?}", o.lambda_max);
        let _ = writeln!(s, "vc_scale = {}", vc_scale_str(o.vc_scale));

        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "timing = {}", self.output.timing);
        s
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub formulation: Option<Formulation>,
    pub weight: Option<f64>,
    pub jobs: Option<usize>,
    pub train_episodes: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub sweep_train_episodes: Option<usize>,
    pub instances: Option<usize>,
    pub samples: Option<usize>,
}

/// Parses configuration text; `file` names the source in errors.
pub fn parse_config_str(text: &str, file: &str, env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
    parse_with(text, file, env_seed, |_, _| Ok(()))
}

fn parse_with(
    text: &str,
    file: &str,
    env_seed: Option<&str>,
    overrides: impl Fn(&mut RunConfig, &mut Origins) -> Result<(), (String, String)>,
) -> Result<RunConfig, ConfigError> {
    let err = |line: usize, key: &str, message: String| ConfigError {
        file: file.to_string(),
        line,
        key: key.to_string(),
        message,
    };
    let mut cfg = RunConfig::default();
    let mut origins = Origins::default();
    if let Some(raw) = env_seed {
        let seed = parse_u64(raw).map_err(|m| err(0, SEED_ENV, m))?;
        cfg.set_seed(seed);
    }
    let mut section: Option<String> = None;
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, line, "malformed section header".into()))?
                .trim();
            if !["env", "policy", "train", "eval", "sweep", "oracle", "output"].contains(&name) {
                return Err(err(line_no, name, "unknown section".into()));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, line, "expected `key = value`".into()))?;
        let key = key.trim();
        let sec = section
            .as_deref()
            .ok_or_else(|| err(line_no, key, "key outside any section".into()))?;
        let full = format!("{sec}.{key}");
        if seen.contains(&full) {
            return Err(err(line_no, &full, "duplicate key".into()));
        }
        cfg.set(sec, key, value).map_err(|m| err(line_no, &full, m))?;
        origins.0.push((full.clone(), line_no));
        seen.push(full);
    }
    overrides(&mut cfg, &mut origins).map_err(|(key, m)| err(0, &key, m))?;
    cfg.validate().map_err(|(key, m)| {
        let line = origins.line(key);
        err(line, key, m)
    })?;
    Ok(cfg)
}

/// Resolves the effective configuration for one invocation.
pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let (text, file) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                file: p.display().to_string(),
                line: 0,
                key: "-".into(),
                message: format!("cannot read: {e}"),
            })?;
            (text, p.display().to_string())
        }
        None => (String::new(), "<defaults>".to_string()),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_with(&text, &file, env_seed.as_deref(), |cfg, _| {
        if let Some(seed) = overrides.seed {
            cfg.set_seed(seed);
        }
        if let Some(f) = overrides.formulation {
            cfg.train.formulation = f;
            cfg.sweep.formulations = vec![f];
        }
        if let Some(w) = overrides.weight {
            cfg.train.weight = w;
            cfg.sweep.weights = vec![w];
        }
        if let Some(j) = overrides.jobs {
            cfg.sweep.jobs = j;
        }
        if let Some(n) = overrides.train_episodes {
            cfg.train.episodes = n;
        }
        if let Some(n) = overrides.eval_episodes {
            cfg.eval.episodes = n;
        }
        if let Some(path) = &overrides.checkpoint {
            cfg.eval.checkpoint = Some(path.clone());
        }
        if let Some(n) = overrides.sweep_train_episodes {
            cfg.sweep.train_episodes = n;
        }
        if let Some(n) = overrides.instances {
            cfg.oracle.instances = n;
        }
        if let Some(n) = overrides.samples {
            cfg.oracle.samples = n;
        }
        Ok(())
    })
}

/// Reads a configuration file with defaults for everything it omits.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    resolve(Some(path), &Overrides::default())
}

pub fn write_resolved(cfg: &RunConfig, out: &Path) -> std::io::Result<PathBuf> {
    let path = out.join("resolved_config.txt");
    std::fs::write(&path, cfg.to_text())?;
    Ok(path)
}
