use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use safepg::trainer::Formulation;
use safepg_cli::commands::{self, Failure};
use safepg_cli::config::{resolve, Overrides};

/// Safe policy gradients under joint probabilistic constraints.
///
/// Exit status: 0 on success, 1 on invalid flags or configuration, 2 when a
/// run fails or a check finds a violation.
#[derive(Parser)]
#[command(name = "safepg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI configuration file; omitted fields take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for every random stream (falls back to SAFEPG_SEED).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one navigation policy; writes checkpoint.txt and train_log.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// prob or cum.
        #[arg(long)]
        formulation: Option<Formulation>,
        /// λ for prob, μ for cum.
        #[arg(long)]
        weight: Option<f64>,
        /// Number of updates.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a checkpoint from uniform safe starts; writes evaluation.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to load [default: <out>/checkpoint.txt].
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Evaluation episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train and evaluate a weight grid; writes sweep.csv, pareto.csv and pareto.svg.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Restrict the grid to one formulation.
        #[arg(long)]
        formulation: Option<Formulation>,
        /// Restrict the grid to one weight.
        #[arg(long)]
        weight: Option<f64>,
        /// Training episodes per cell.
        #[arg(long)]
        episodes: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the safety-gradient estimator and recursion on random tabular MDPs.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of random instances.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, hide = true)]
        corrupt_estimator: bool,
    },
    /// Check feasible-set inclusions and the dual bound on random tabular MDPs.
    Lemmacheck {
        #[command(flatten)]
        common: Common,
        /// Number of random (mdp, policy, δ) samples.
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn load(common: &Common, overrides: Overrides) -> Result<safepg_cli::config::RunConfig, Failure> {
    let overrides = Overrides {
        seed: common.seed,
        ..overrides
    };
    resolve(common.config.as_deref(), &overrides).map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            common,
            formulation,
            weight,
            episodes,
        } => {
            let cfg = load(
                &common,
                Overrides {
                    formulation,
                    weight,
                    train_episodes: episodes,
                    ..Default::default()
                },
            )?;
            commands::train_cmd(&cfg, &common.out)
        }
        Command::Evaluate {
            common,
            checkpoint,
            episodes,
        } => {
            let cfg = load(
                &common,
                Overrides {
                    eval_episodes: episodes,
                    checkpoint,
                    ..Default::default()
                },
            )?;
            commands::evaluate_cmd(&cfg, &common.out)
        }
        Command::Sweep {
            common,
            formulation,
            weight,
            episodes,
            jobs,
        } => {
            let cfg = load(
                &common,
                Overrides {
                    formulation,
                    weight,
                    sweep_train_episodes: episodes,
                    jobs,
                    ..Default::default()
                },
            )?;
            commands::sweep_cmd(&cfg, &common.out)
        }
        Command::Gradcheck {
            common,
            instances,
            corrupt_estimator,
        } => {
            let cfg = load(
                &common,
                Overrides {
                    instances,
                    ..Default::default()
                },
            )?;
            commands::gradcheck_cmd(&cfg, &common.out, corrupt_estimator)
        }
        Command::Lemmacheck { common, samples } => {
            let cfg = load(
                &common,
                Overrides {
                    samples,
                    ..Default::default()
                },
            )?;
            commands::lemmacheck_cmd(&cfg, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
