//! Evaluation protocol, weight sweeps, and Pareto reporting.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::env::NavEnvConfig;
use crate::error::{Error, Result};
use crate::policy::RbfGaussianPolicy;
use crate::rng::RngStream;
use crate::trainer::{train, Formulation, TrainConfig};

/// Stream id of the evaluation random stream for a given seed.
pub const EVAL_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Fraction of episodes whose `T + 1` states were all safe.
    pub safety_rate: f64,
    /// Mean undiscounted task return `Σ_{t<T} r_t`.
    pub mean_return: f64,
}

/// Rolls out `n_episodes` from uniform safe initial states.
///
/// All start states are sampled first, then the episodes are run in order.
pub fn evaluate(
    policy: &RbfGaussianPolicy,
    env: &NavEnvConfig,
    n_episodes: usize,
    rng: &mut RngStream,
) -> Result<Evaluation> {
    if n_episodes == 0 {
        return Err(Error::Precondition("evaluation needs at least one episode".into()));
    }
    // Starts are drawn before any action noise so that two policies
    // evaluated on equal streams face the same initial states.
    let starts = (0..n_episodes)
        .map(|_| env.sample_safe_uniform(rng))
        .collect::<Result<Vec<_>>>()?;
    let (mut safe, mut total) = (0usize, 0.0);
    for s0 in starts {
        let traj = env.rollout(policy, s0, rng)?;
        if traj.jointly_safe() {
            safe += 1;
        }
        total += traj.total_reward();
    }
    Ok(Evaluation {
        safety_rate: safe as f64 / n_episodes as f64,
        mean_return: total / n_episodes as f64,
    })
}

/// One evaluated `(formulation, weight, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub formulation: Formulation,
    pub weight: f64,
    pub seed: u64,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub safety_rate: f64,
    pub mean_return: f64,
    pub wall_seconds: f64,
}

pub const CSV_HEADER: &str =
    "formulation,weight,seed,train_episodes,eval_episodes,safety_rate,mean_return,wall_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub weights: Vec<f64>,
    pub formulations: Vec<Formulation>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// `n` log-spaced points on `[lo, hi]`, endpoints included.
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        match n {
            0 => vec![],
            1 => vec![lo],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect(),
        }
    }

    /// Eight log-spaced weights on `[0.45, 14]`, both formulations, seeds 1–3.
    pub fn default_grid() -> Self {
        Self {
            weights: Self::log_spaced(0.45, 14.0, 8),
            formulations: Formulation::ALL.to_vec(),
            seeds: vec![1, 2, 3],
        }
    }

    /// Cells in `(formulation, weight, seed)` order.
    pub fn cells(&self) -> Vec<(Formulation, f64, u64)> {
        let mut formulations = self.formulations.clone();
        formulations.sort();
        let mut weights = self.weights.clone();
        weights.sort_by(f64::total_cmp);
        let mut seeds = self.seeds.clone();
        seeds.sort();
        let mut out = Vec::new();
        for &f in &formulations {
            for &w in &weights {
                for &s in &seeds {
                    out.push((f, w, s));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub eval_episodes: usize,
    /// Worker threads; 1 runs cells sequentially.
    pub jobs: usize,
    /// Record wall-clock seconds per cell; zeros otherwise.
    pub wall_clock: bool,
    /// `(weight, η)` pairs replacing the template step size for that weight.
    pub eta_by_weight: Vec<(f64, f64)>,
}

impl SweepSettings {
    pub fn eta_for(&self, weight: f64, default: f64) -> f64 {
        self.eta_by_weight
            .iter()
            .find(|(w, _)| *w == weight)
            .map_or(default, |(_, eta)| *eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub formulation: Formulation,
    pub weight: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<CellFailure>,
}

/// Trains and evaluates one policy per cell.
///
/// Each cell trains from a zero policy on the stream `(seed, TRAIN_STREAM)`
/// and evaluates on `(seed, EVAL_STREAM)`, so cells sharing a seed see the
/// same evaluation start states.
pub fn run_cell(
    formulation: Formulation,
    weight: f64,
    seed: u64,
    template: &TrainConfig,
    policy0: &RbfGaussianPolicy,
    env: &NavEnvConfig,
    settings: &SweepSettings,
) -> Result<SweepRecord> {
    let started = Instant::now();
    let cfg = TrainConfig {
        formulation,
        weight,
        seed,
        eta: settings.eta_for(weight, template.eta),
        wall_clock: false,
        ..template.clone()
    };
    let (policy, _) = train(&cfg, env, policy0.clone(), None)?;
    let mut rng = RngStream::new(seed, EVAL_STREAM);
    let eval = evaluate(&policy, env, settings.eval_episodes, &mut rng)?;
    Ok(SweepRecord {
        formulation,
        weight,
        seed,
        train_episodes: cfg.episodes * cfg.batch_size,
        eval_episodes: settings.eval_episodes,
        safety_rate: eval.safety_rate,
        mean_return: eval.mean_return,
        wall_seconds: if settings.wall_clock {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

pub fn sweep(
    grid: &SweepGrid,
    template: &TrainConfig,
    policy0: &RbfGaussianPolicy,
    env: &NavEnvConfig,
    settings: &SweepSettings,
) -> Result<SweepOutcome> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Precondition("sweep grid is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(usize, Result<SweepRecord>)> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, &(f, w, s))| (i, run_cell(f, w, s, template, policy0, env, settings)))
            .collect()
    });
    let mut outcome = SweepOutcome::default();
    for (i, result) in results {
        let (formulation, weight, seed) = cells[i];
        match result {
            Ok(r) => outcome.records.push(r),
            Err(e) => outcome.failures.push(CellFailure {
                formulation,
                weight,
                seed,
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

fn dominates(a: &SweepRecord, b: &SweepRecord) -> bool {
    a.safety_rate >= b.safety_rate
        && a.mean_return >= b.mean_return
        && (a.safety_rate > b.safety_rate || a.mean_return > b.mean_return)
}

/// Non-dominated records of each formulation under (max safety, max return).
///
/// Among records sitting on the same point only the one with the lowest
/// weight, then lowest seed, is kept. Output is ordered by formulation, then
/// safety rate.
pub fn pareto_front(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut front: Vec<SweepRecord> = Vec::new();
    for f in Formulation::ALL {
        let mut group: Vec<&SweepRecord> = records.iter().filter(|r| r.formulation == f).collect();
        group.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.seed.cmp(&b.seed)));
        let mut kept: Vec<SweepRecord> = Vec::new();
        for r in &group {
            if group.iter().any(|o| dominates(o, r)) {
                continue;
            }
            if kept
                .iter()
                .any(|k| k.safety_rate == r.safety_rate && k.mean_return == r.mean_return)
            {
                continue;
            }
            kept.push((*r).clone());
        }
        kept.sort_by(|a, b| a.safety_rate.total_cmp(&b.safety_rate));
        front.extend(kept);
    }
    front
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Spearman correlation between weight and safety rate within one formulation.
pub fn weight_safety_correlation(records: &[SweepRecord], formulation: Formulation) -> Option<f64> {
    let (w, s): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.formulation == formulation)
        .map(|r| (r.weight, r.safety_rate))
        .unzip();
    spearman(&w, &s)
}

/// Mean returns of both formulations within one safety band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandComparison {
    pub center: f64,
    pub probabilistic_return: f64,
    pub cumulative_return: f64,
    pub probabilistic_count: usize,
    pub cumulative_count: usize,
}

impl BandComparison {
    /// Probabilistic minus cumulative mean return.
    pub fn advantage(&self) -> f64 {
        self.probabilistic_return - self.cumulative_return
    }
}

/// Matched-safety comparison between the formulations.
///
/// A band `[c − half_width, c + half_width]` is centered on every record's
/// safety rate; bands holding records of both formulations are compared by
/// the mean return of each formulation's members. Bands with identical
/// membership are reported once, ordered by center.
pub fn matched_bands(records: &[SweepRecord], half_width: f64) -> Vec<BandComparison> {
    let mut centers: Vec<f64> = records.iter().map(|r| r.safety_rate).collect();
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut out = Vec::new();
    for c in centers {
        let members: Vec<usize> = (0..records.len())
            .filter(|&i| (records[i].safety_rate - c).abs() <= half_width + 1e-12)
            .collect();
        if seen.contains(&members) {
            continue;
        }
        let mean_of = |f: Formulation| {
            let v: Vec<f64> = members
                .iter()
                .filter(|&&i| records[i].formulation == f)
                .map(|&i| records[i].mean_return)
                .collect();
            (v.iter().sum::<f64>() / v.len().max(1) as f64, v.len())
        };
        let (p_ret, p_n) = mean_of(Formulation::Probabilistic);
        let (c_ret, c_n) = mean_of(Formulation::Cumulative);
        seen.push(members);
        if p_n > 0 && c_n > 0 {
            out.push(BandComparison {
                center: c,
                probabilistic_return: p_ret,
                cumulative_return: c_ret,
                probabilistic_count: p_n,
                cumulative_count: c_n,
            });
        }
    }
    out
}

pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{:?},{:?},{:?}",
            r.formulation,
            r.weight,
            r.seed,
            r.train_episodes,
            r.eval_episodes,
            r.safety_rate,
            r.mean_return,
            r.wall_seconds
        );
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::parse(line_no, format!("expected 8 columns, found {}", f.len())));
        }
        let real = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| Error::parse(line_no, format!("bad number `{}`", f[i])))
        };
        let int = |i: usize| {
            f[i].parse::<u64>()
                .map_err(|_| Error::parse(line_no, format!("bad integer `{}`", f[i])))
        };
        out.push(SweepRecord {
            formulation: f[0].parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?,
            weight: real(1)?,
            seed: int(2)?,
            train_episodes: int(3)? as usize,
            eval_episodes: int(4)? as usize,
            safety_rate: real(5)?,
            mean_return: real(6)?,
            wall_seconds: real(7)?,
        });
    }
    Ok(out)
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records)).map_err(|e| Error::io(path, e))
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 600.0;
const MARGIN_L: f64 = 90.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 70.0;

fn color(f: Formulation) -> &'static str {
    match f {
        Formulation::Probabilistic => "#d62728",
        Formulation::Cumulative => "#1f77b4",
    }
}

/// Safety rate on x, mean return on y, one color per formulation.
pub fn render_svg(records: &[SweepRecord]) -> String {
    let (x_lo, x_hi) = (0.0, 1.0);
    let (mut y_lo, mut y_hi) = records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.mean_return), hi.max(r.mean_return))
    });
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 0.0);
    }
    if y_hi - y_lo < 1e-9 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 5.0;
        let y = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="middle">{:.1}</text>"#,
            px(x),
            MARGIN_T + plot_h,
            px(x),
            MARGIN_T + plot_h + 5.0,
            px(x),
            MARGIN_T + plot_h + 20.0,
            x
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{:.1}</text>"#,
            MARGIN_L - 5.0,
            py(y),
            MARGIN_L,
            py(y),
            MARGIN_L - 8.0,
            py(y) + 4.0,
            y
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">safety rate</text>"#,
        MARGIN_L + plot_w / 2.0,
        SVG_H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">mean return</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    for r in records {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{} w={} seed={}</title></circle>"#,
            px(r.safety_rate.clamp(x_lo, x_hi)),
            py(r.mean_return),
            color(r.formulation),
            r.formulation,
            r.weight,
            r.seed
        );
    }
    for (i, f) in Formulation::ALL.iter().enumerate() {
        let y = MARGIN_T + 15.0 + 18.0 * i as f64;
        let x = MARGIN_L + 15.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            color(*f),
            x + 10.0,
            y + 4.0,
            f
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg_scatter(records: &[SweepRecord], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(records)).map_err(|e| Error::io(path, e))
}
