//! Subcommand bodies. Each returns `Ok(())` or a [`Failure`] carrying the
//! exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use safepg::oracle::harness::{
    check_dual, check_gradients, dual_instance, feasibility_sweep, gradcheck_instance, xi_grid, DualReport,
};
use safepg::oracle::policy_to_text;
use safepg::sweep::{
    emit_csv, emit_svg_scatter, evaluate, matched_bands, pareto_front, records_to_csv, sweep,
    weight_safety_correlation, SweepGrid, SweepSettings, EVAL_STREAM,
};
use safepg::trainer::{log_to_csv, train, Formulation, TrainConfig};
use safepg::{RbfGaussianPolicy, RngStream};

use crate::config::{write_resolved, RunConfig};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration; exit 1.
    Usage(String),
    /// Anything that went wrong while running; exit 2.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<safepg::Error> for Failure {
    fn from(e: safepg::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn write(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Creates the output directory and records the effective configuration.
pub fn prepare_out(cfg: &RunConfig, out: &Path) -> CmdResult {
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    write_resolved(cfg, out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    prepare_out(cfg, out)?;
    let policy0 = cfg.policy.build(&cfg.env)?;
    let tc = TrainConfig {
        wall_clock: cfg.output.timing,
        ..cfg.train.clone()
    };
    let checkpoint = out.join("checkpoint.txt");
    let (_, log) = train(&tc, &cfg.env, policy0, Some(&checkpoint)).map_err(|e| {
        Failure::Runtime(format!(
            "training aborted: {e}; last finite policy saved to {}",
            checkpoint.display()
        ))
    })?;
    write(&out.join("train_log.csv"), &log_to_csv(&log))?;
    if let Some(last) = log.last() {
        println!(
            "{} weight={} episodes={} last-window return={:.3} joint_safe={:.3}",
            tc.formulation, tc.weight, tc.episodes, last.episode_return, last.joint_safe
        );
    }
    println!("wrote {}", checkpoint.display());
    Ok(())
}

pub fn evaluate_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    prepare_out(cfg, out)?;
    let path: PathBuf = cfg
        .eval
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("checkpoint.txt"));
    let policy = RbfGaussianPolicy::load(&path)?
        .with_lattice_origin(cfg.env.bounds[0])
        .with_cutoff(cfg.policy.cutoff);
    let mut rng = RngStream::new(cfg.train.seed, EVAL_STREAM);
    let e = evaluate(&policy, &cfg.env, cfg.eval.episodes, &mut rng)?;
    let text = format!(
        "episodes,seed,safety_rate,mean_return\n{},{},{:?},{:?}\n",
        cfg.eval.episodes, cfg.train.seed, e.safety_rate, e.mean_return
    );
    write(&out.join("evaluation.csv"), &text)?;
    println!(
        "episodes={} safety_rate={:.4} mean_return={:.3}",
        cfg.eval.episodes, e.safety_rate, e.mean_return
    );
    Ok(())
}

pub fn sweep_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    prepare_out(cfg, out)?;
    let s = &cfg.sweep;
    let grid = SweepGrid {
        weights: s.weights.clone(),
        formulations: s.formulations.clone(),
        seeds: s.seeds.clone(),
    };
    let template = TrainConfig {
        episodes: s.train_episodes / cfg.train.batch_size,
        start_mode: s.start_mode,
        eta: s.eta,
        ..cfg.train.clone()
    };
    let settings = SweepSettings {
        eval_episodes: s.eval_episodes,
        jobs: s.jobs,
        wall_clock: cfg.output.timing,
        eta_by_weight: s.eta_by_weight.clone(),
    };
    let policy0 = cfg.policy.build(&cfg.env)?;
    let outcome = sweep(&grid, &template, &policy0, &cfg.env, &settings)?;
    emit_csv(&outcome.records, &out.join("sweep.csv"))?;
    let front = pareto_front(&outcome.records);
    write(&out.join("pareto.csv"), &records_to_csv(&front))?;
    emit_svg_scatter(&outcome.records, &out.join("pareto.svg"))?;

    for r in &outcome.records {
        println!(
            "{:<13} weight={:<8} seed={:<3} safety={:.3} return={:.2}",
            r.formulation.to_string(),
            r.weight,
            r.seed,
            r.safety_rate,
            r.mean_return
        );
    }
    for f in Formulation::ALL {
        if let Some(rho) = weight_safety_correlation(&outcome.records, f) {
            println!("spearman(weight, safety) {f}: {rho:.3}");
        }
    }
    for b in matched_bands(&outcome.records, 0.02) {
        println!(
            "band {:.3}: probabilistic {:.2} vs cumulative {:.2}",
            b.center, b.probabilistic_return, b.cumulative_return
        );
    }
    if !outcome.failures.is_empty() {
        let mut msg = String::from("some cells failed:");
        for f in &outcome.failures {
            let _ = write!(
                msg,
                "\n  {} weight={} seed={}: {}",
                f.formulation, f.weight, f.seed, f.message
            );
        }
        return Err(Failure::Runtime(msg));
    }
    Ok(())
}

pub fn gradcheck_cmd(cfg: &RunConfig, out: &Path, corrupt: bool) -> CmdResult {
    prepare_out(cfg, out)?;
    let o = &cfg.oracle;
    let mut csv = String::from("instance,states,horizon,estimator_rel_err,analytic_rel_err,recursion_max_diff\n");
    println!(
        "{:>8} {:>6} {:>7} {:>14} {:>14} {:>14}",
        "instance", "states", "horizon", "vs fd", "vs analytic", "recursion"
    );
    let mut failed = Vec::new();
    for i in 0..o.instances {
        let (mdp, policy) = gradcheck_instance(o.seed, i);
        let r = check_gradients(i, &mdp, &policy, corrupt)?;
        println!(
            "{:>8} {:>6} {:>7} {:>14.3e} {:>14.3e} {:>14.3e}",
            i, r.n_states, r.horizon, r.estimator_rel_err, r.analytic_rel_err, r.recursion_max_diff
        );
        let _ = writeln!(
            csv,
            "{},{},{},{:?},{:?},{:?}",
            i, r.n_states, r.horizon, r.estimator_rel_err, r.analytic_rel_err, r.recursion_max_diff
        );
        if !r.passed() {
            let mdp_path = out.join(format!("gradcheck_instance_{i}.mdp"));
            let policy_path = out.join(format!("gradcheck_instance_{i}.policy"));
            write(&mdp_path, &mdp.to_text())?;
            write(&policy_path, &policy_to_text(&policy))?;
            failed.push(format!(
                "instance {i}: {} / {}",
                mdp_path.display(),
                policy_path.display()
            ));
        }
    }
    write(&out.join("gradcheck.csv"), &csv)?;
    if failed.is_empty() {
        println!("all {} instances within tolerance", o.instances);
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} of {} instances out of tolerance; replay files:\n  {}",
            failed.len(),
            o.instances,
            failed.join("\n  ")
        )))
    }
}

fn dual_rows(report: &DualReport, csv: &mut String) {
    for r in &report.results {
        let _ = writeln!(
            csv,
            "{},{:?},{},{:?},{:?},{:?}",
            report.index, r.xi, r.feasible, r.p_tilde_star, r.d_tilde_star, r.lambda_star
        );
    }
}

pub fn lemmacheck_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    prepare_out(cfg, out)?;
    let o = &cfg.oracle;
    let mut problems = Vec::new();

    let (summary, counterexample) = feasibility_sweep(o.seed, o.samples)?;
    println!(
        "feasibility: {} samples, |F̂|={} |F|={} |F̄|={}, inclusion violations={}, counting violations={}",
        summary.samples,
        summary.in_f_hat,
        summary.in_f,
        summary.in_f_bar,
        summary.inclusion_violations,
        summary.markov_violations
    );
    if let Some(c) = counterexample {
        let mdp_path = out.join("counterexample.mdp");
        let policy_path = out.join("counterexample.policy");
        write(&mdp_path, &c.mdp.to_text())?;
        write(&policy_path, &policy_to_text(&c.policy))?;
        problems.push(format!(
            "feasibility sample {} (delta={:?}) violates the inclusions; see {} and {}",
            c.index,
            c.verdict.delta,
            mdp_path.display(),
            policy_path.display()
        ));
    }

    let grid = xi_grid(o.xi_points);
    let mut csv = String::from("instance,xi,feasible,p_tilde_star,d_tilde_star,lambda_star\n");
    for i in 0..o.dual_instances {
        let mdp = dual_instance(o.seed, i);
        let report = check_dual(i, &mdp, &grid, o.lambda_max, o.vc_scale)?;
        dual_rows(&report, &mut csv);
        println!(
            "dual instance {i}: min slack={:.3e} max gap={:.3e} max increase={:.3e} concavity={:.3e} infeasible xi={}",
            report.min_slack,
            report.max_gap,
            report.max_increase,
            report.max_concavity_violation,
            report.infeasible_points
        );
        if !report.passed() {
            let path = out.join(format!("dual_counterexample_{i}.mdp"));
            write(&path, &mdp.to_text())?;
            problems.push(format!("dual instance {i} out of tolerance; see {}", path.display()));
        }
    }
    write(&out.join("lemmacheck.csv"), &csv)?;
    if problems.is_empty() {
        println!("no violations");
        Ok(())
    } else {
        Err(Failure::Runtime(problems.join("\n")))
    }
}
