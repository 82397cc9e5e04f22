use std::path::PathBuf;
use std::process::ExitCode;

use bppo::distributions::DistKind;
use bppo::envs::EnvId;
use clap::{Parser, Subcommand, ValueEnum};

mod bias;
mod eval;
mod plotdata;
mod train;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files (exit 2).
    Usage(anyhow::Error),
    /// A run that started and then failed (exit 3).
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

pub fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

/// Seed from `BPPO_SEED` when set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("BPPO_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| usage(anyhow::anyhow!("BPPO_SEED must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

#[derive(Parser)]
#[command(name = "bppo", version, about = "PPO with Gaussian and Beta policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a checkpoint, metrics and a run manifest.
    Train {
        /// Strict JSON config, or a manifest from an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<EnvId>,
        #[arg(long)]
        dist: Option<DistKind>,
        /// Overrides the config; falls back to BPPO_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        total_steps: Option<u64>,
        /// Defaults to runs/<env>-<dist>-seed<seed>.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over consecutive episodes.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[arg(long, default_value_t = bppo::eval::DEFAULT_EPISODES)]
        episodes: usize,
        /// Falls back to BPPO_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; `<prefix>-<mode>.json` and `.csv` are written.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every step as JSONL.
        #[arg(long)]
        trace: bool,
    },
    /// Boundary-bias grid for a Gaussian or Beta policy.
    Bias(bias::BiasArgs),
    /// Smoothed learning curves from metrics JSONL or episode CSV files.
    Plotdata {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Deterministic,
    Stochastic,
    Both,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, env, dist, seed, total_steps, out_dir } => {
            train::cmd_train(train::TrainArgs { config, env, dist, seed, total_steps, out_dir })
        }
        Command::Eval { checkpoint, mode, episodes, seed, out, trace } => {
            use bppo::eval::EvalMode;
            let modes = match mode {
                ModeArg::Deterministic => vec![EvalMode::Deterministic],
                ModeArg::Stochastic => vec![EvalMode::Stochastic],
                ModeArg::Both => vec![EvalMode::Deterministic, EvalMode::Stochastic],
            };
            eval::cmd_eval(&checkpoint, &modes, episodes, seed, out, trace)
        }
        Command::Bias(args) => bias::cmd_bias(args),
        Command::Plotdata { files, window, out } => plotdata::cmd_plotdata(&files, window, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (CliError::Usage(e) | CliError::Runtime(e)) = &err;
            eprintln!("error: {e:#}");
            ExitCode::from(err.code())
        }
    }
}
