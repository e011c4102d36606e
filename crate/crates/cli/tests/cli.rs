use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use safepg::oracle::{policy_from_text, TabularMdp};
use safepg::sweep::records_from_csv;
use safepg::RbfGaussianPolicy;

fn safepg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safepg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SAFEPG_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let o = safepg(
        &["train", "--weight", "6", "--seed", "1", "--episodes", "30"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["checkpoint.txt", "train_log.csv", "resolved_config.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let policy = RbfGaussianPolicy::load(&dir.path().join("checkpoint.txt")).unwrap();
    assert_eq!(policy.num_kernels(), 1681);
    let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("iter,episode_return,joint_safe,grad_norm,wall_ms\n"));

    let o = safepg(&["evaluate", "--episodes", "25"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = fs::read_to_string(dir.path().join("evaluation.csv")).unwrap();
    assert!(
        eval.starts_with("episodes,seed,safety_rate,mean_return\n25,1,"),
        "{eval}"
    );
}

#[test]
fn evaluate_without_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = safepg(&["evaluate", "--episodes", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checkpoint.txt"));
}

#[test]
fn flags_beat_file_beat_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[train]\nweight = 3\nepisodes = 5\n").unwrap();
    let out = dir.path().join("a");
    let o = Command::new(env!("CARGO_BIN_EXE_safepg"))
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--weight",
            "5",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("SAFEPG_SEED", "42")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("weight = 5.0\n"), "{resolved}");
    assert!(resolved.contains("episodes = 5\n"));
    assert!(resolved.contains("\nseed = 42\n"));
}

#[test]
fn invalid_config_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[train]\n\neta = -1\n").unwrap();
    let o = safepg(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.ini:3") && err.contains("train.eta"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        safepg(&["gradcheck", "--instances", "0"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        safepg(&["train", "--formulation", "both"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(safepg(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn help_lists_every_flag() {
    let o = Command::new(env!("CARGO_BIN_EXE_safepg"))
        .args(["sweep", "--help"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--config",
        "--out",
        "--seed",
        "--formulation",
        "--weight",
        "--episodes",
        "--jobs",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn corrupted_estimator_exits_two_with_replay_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = safepg(&["gradcheck", "--instances", "2", "--corrupt-estimator"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let mdp = fs::read_to_string(dir.path().join("gradcheck_instance_0.mdp")).unwrap();
    let policy = fs::read_to_string(dir.path().join("gradcheck_instance_0.policy")).unwrap();
    let mdp = TabularMdp::from_text(&mdp).unwrap();
    let policy = policy_from_text(&policy).unwrap();
    assert_eq!(policy.n_states(), mdp.n_states());
}

#[test]
fn small_sweep_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.ini");
    fs::write(
        &cfg,
        "[sweep]\nweights = 1, 6\nseeds = 1\ntrain_episodes = 20\neval_episodes = 10\njobs = 2\n",
    )
    .unwrap();
    let o = safepg(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let records = records_from_csv(&fs::read_to_string(dir.path().join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.train_episodes == 20 && r.eval_episodes == 10));
    let svg = fs::read_to_string(dir.path().join("pareto.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(dir.path().join("pareto.csv").exists());
}
