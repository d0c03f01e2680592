//! `envbridge`: one binary for serving environments, benchmarking the
//! vector client, training and evaluating PPO, and checking transcripts.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime failure.

pub mod manifest;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use envbridge_core::client::{
    benchmark, BenchmarkConfig, BenchmarkReport, ClientError, LaunchConfig, LocalVecEnv, ServerCommand, VecEnv, VectorEnv,
    SERVER_BIN_VAR,
};
use envbridge_core::server::{self, ServerConfig};
use envbridge_core::transcript::{self, RecordSpec, ReplayOutcome};
use envbridge_ppo::{evaluate, load_policy, random_baseline, save_policy, train_to_csv, PpoConfig, ReturnSummary, TrainError};
use serde::Serialize;

pub use manifest::{manifest_path, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "envbridge", version, about = "Lockstep environment server, benchmarks and PPO training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Host one environment pool over TCP (same flags as `envbridge-server`).
    Serve(ServerConfig),
    /// Print the registered environment names.
    ListEnvs,
    /// Measure interaction rates of a random policy.
    Bench(BenchArgs),
    /// Run `bench` once per process count.
    Sweep(SweepArgs),
    /// Train PPO and write one CSV row per update.
    Train(TrainArgs),
    /// Report episode returns of a saved policy.
    Eval(EvalArgs),
    /// Report episode returns of the uniform-random policy.
    Baseline(BaselineArgs),
    /// Record a seeded random-policy session as a transcript file.
    RecordTranscript(RecordArgs),
    /// Replay a transcript against a fresh in-process server.
    ReplayTranscript(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 1)]
    processes: usize,
    #[arg(long, default_value_t = 16)]
    agents: u32,
    #[arg(long, default_value_t = 4)]
    action_repeat: u32,
    /// Timed window in seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Untimed lead-in in seconds.
    #[arg(long, default_value_t = 2.0)]
    warmup: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; a manifest is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    env: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    processes: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    agents: u32,
    #[arg(long, default_value_t = 4)]
    action_repeat: u32,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 2.0)]
    warmup: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 2)]
    processes: usize,
    #[arg(long, default_value_t = 8)]
    agents: u32,
    #[arg(long, default_value_t = 4)]
    action_repeat: u32,
    /// Environment frame budget (policy steps × action repeat).
    #[arg(long, default_value_t = 300_000)]
    frames: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_policy: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    rollout_length: usize,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    minibatches: usize,
    #[arg(long, default_value_t = 3e-4)]
    learning_rate: f64,
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    hidden: Vec<usize>,
    /// Step the environments in this process instead of launching servers.
    #[arg(long)]
    in_process: bool,
}

#[derive(Debug, Args, Serialize)]
struct EnvArgs {
    #[arg(long, default_value_t = 1)]
    processes: usize,
    #[arg(long, default_value_t = 8)]
    agents: u32,
    #[arg(long, default_value_t = 4)]
    action_repeat: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    in_process: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Act on the mean action instead of sampling.
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    env: EnvArgs,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[command(flatten)]
    launch: EnvArgs,
}

#[derive(Debug, Args)]
struct RecordArgs {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 2)]
    agents: u32,
    #[arg(long, default_value_t = 4)]
    action_repeat: u32,
    #[arg(long, default_value_t = 7)]
    reset_seed: u64,
    #[arg(long, default_value_t = 11)]
    action_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    path: PathBuf,
    /// Server seed offset to replay under.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(io::Error, csv::Error, envbridge_ppo::PolicyFileError, transcript::RecordError);

type Outcome = Result<(), Failure>;

/// Parse `args` (program name first) and run the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Serve(config) => return server::run_config(&config),
        Command::ListEnvs => server::list_envs(&mut io::stdout()).map_err(Failure::from),
        Command::Bench(a) => bench(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Baseline(a) => baseline(&a),
        Command::RecordTranscript(a) => record(&a),
        Command::ReplayTranscript(a) => replay(&a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            f.code()
        }
    }
}

/// `$ENVBRIDGE_SERVER_BIN` if set, otherwise this binary's own `serve` subcommand.
pub fn server_command() -> ServerCommand {
    if std::env::var_os(SERVER_BIN_VAR).is_some_and(|p| !p.is_empty()) {
        return ServerCommand::resolve();
    }
    match std::env::current_exe() {
        Ok(exe) => ServerCommand::new(exe).with_prefix("serve"),
        Err(_) => ServerCommand::resolve(),
    }
}

fn known_env(name: &str) -> Outcome {
    envbridge_core::envs::definition(name).map(|_| ()).map_err(|e| Failure::Usage(e.to_string()))
}

fn seconds(flag: &str, value: f64) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(value).map_err(|_| Failure::Usage(format!("--{flag} must be a non-negative number of seconds")))
}

#[derive(Serialize)]
struct BenchRow<'a> {
    env: &'a str,
    #[serde(rename = "P")]
    processes: usize,
    #[serde(rename = "M")]
    agents: usize,
    #[serde(rename = "R")]
    action_repeat: u32,
    policy_steps_per_sec: f64,
    frames_per_sec: f64,
}

impl<'a> From<&'a BenchmarkReport> for BenchRow<'a> {
    fn from(r: &'a BenchmarkReport) -> Self {
        Self {
            env: &r.env,
            processes: r.processes,
            agents: r.agents_per_process,
            action_repeat: r.action_repeat,
            policy_steps_per_sec: r.policy_steps_per_sec,
            frames_per_sec: r.frames_per_sec,
        }
    }
}

fn write_rows(reports: &[BenchmarkReport], out: &mut dyn Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(BenchRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Print the rows, and when `out` is given also write them there with a manifest.
fn emit(reports: &[BenchmarkReport], out: Option<&Path>, manifest: &mut RunManifest) -> Outcome {
    write_rows(reports, &mut io::stdout().lock())?;
    if let Some(path) = out {
        write_rows(reports, &mut std::fs::File::create(path)?)?;
        manifest.finish();
        manifest.write_beside(path)?;
    }
    Ok(())
}

fn bench_config(env: &str, p: usize, m: u32, r: u32, seed: u64, duration: f64, warmup: f64) -> Result<BenchmarkConfig, Failure> {
    known_env(env)?;
    let launch = LaunchConfig::new(env, p, m, r).with_base_seed(seed).with_server(server_command());
    let mut cfg = BenchmarkConfig::new(launch, seconds("duration", duration)?);
    cfg.warmup = seconds("warmup", warmup)?;
    cfg.policy_seed = seed;
    Ok(cfg)
}

fn bench(a: &BenchArgs) -> Outcome {
    let mut manifest = RunManifest::start("bench", a, a.seed);
    let cfg = bench_config(&a.env, a.processes, a.agents, a.action_repeat, a.seed, a.duration, a.warmup)?;
    let report = benchmark(&cfg)?;
    emit(&[report], a.out.as_deref(), &mut manifest)
}

fn sweep(a: &SweepArgs) -> Outcome {
    if a.processes.is_empty() {
        return Err(Failure::Usage("--processes needs at least one count".into()));
    }
    let mut manifest = RunManifest::start("sweep", a, a.seed);
    let mut reports = Vec::with_capacity(a.processes.len());
    for &p in &a.processes {
        let cfg = bench_config(&a.env, p, a.agents, a.action_repeat, a.seed, a.duration, a.warmup)?;
        let report = benchmark(&cfg)?;
        eprintln!("P={p}: {:.0} frames/s", report.frames_per_sec);
        reports.push(report);
    }
    emit(&reports, a.out.as_deref(), &mut manifest)
}

fn open_env(env: &str, a: &EnvArgs) -> Result<Box<dyn VecEnv>, Failure> {
    known_env(env)?;
    let launch = LaunchConfig::new(env, a.processes, a.agents, a.action_repeat).with_base_seed(a.seed).with_server(server_command());
    Ok(if a.in_process { Box::new(LocalVecEnv::new(&launch)?) } else { Box::new(VectorEnv::launch(&launch)?) })
}

fn train(a: &TrainArgs) -> Outcome {
    let config = PpoConfig {
        rollout_length: a.rollout_length,
        epochs: a.epochs,
        minibatches: a.minibatches,
        learning_rate: a.learning_rate,
        hidden: a.hidden.clone(),
        total_frames: a.frames,
        seed: a.seed,
        ..PpoConfig::default()
    };
    config.validate()?;
    if a.hidden.contains(&0) {
        return Err(Failure::Usage("--hidden sizes must be positive".into()));
    }
    let env_args =
        EnvArgs { processes: a.processes, agents: a.agents, action_repeat: a.action_repeat, seed: a.seed, in_process: a.in_process };
    let mut env = open_env(&a.env, &env_args)?;
    let rollout = config.frames_per_rollout(env.spec().total_agents(), a.action_repeat);
    if a.frames < rollout {
        return Err(TrainError::Budget { budget: a.frames, rollout }.into());
    }
    let mut manifest = RunManifest::start("train", a, a.seed);
    manifest.write_beside(&a.out_csv)?;
    let outcome = train_to_csv(env.as_mut(), &config, &a.out_csv)?;
    if let Some(path) = &a.out_policy {
        save_policy(path, &a.env, &outcome.model)?;
    }
    manifest.finish();
    manifest.write_beside(&a.out_csv)?;
    if let Some(last) = outcome.history.last() {
        println!("updates {} frames {} mean_return {:.4}", outcome.history.len(), last.frames, last.mean_return);
    }
    Ok(())
}

fn print_summary(s: &ReturnSummary) {
    println!("episodes {}", s.returns.len());
    println!("mean_return {:.6}", s.mean());
    println!("std_return {:.6}", s.std());
}

fn positive_episodes(n: usize) -> Outcome {
    if n == 0 {
        return Err(Failure::Usage("--episodes must be positive".into()));
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Outcome {
    positive_episodes(a.episodes)?;
    let (header, model) = load_policy(&a.policy)?;
    let mut env = open_env(&header.env_name, &a.env)?;
    let spec = env.spec();
    if spec.obs_space != model.obs_space || spec.action_space != model.action_space {
        return Err(Failure::Runtime(format!("policy spaces do not match environment `{}`", header.env_name)));
    }
    let summary = evaluate(env.as_mut(), &model, a.episodes, a.env.seed, a.deterministic)?;
    print_summary(&summary);
    Ok(())
}

fn baseline(a: &BaselineArgs) -> Outcome {
    positive_episodes(a.episodes)?;
    let mut env = open_env(&a.env, &a.launch)?;
    print_summary(&random_baseline(env.as_mut(), a.episodes, a.launch.seed)?);
    Ok(())
}

fn record(a: &RecordArgs) -> Outcome {
    let spec = RecordSpec {
        env_name: a.env.clone(),
        n_agents: a.agents,
        action_repeat: a.action_repeat,
        reset_seed: a.reset_seed,
        action_seed: a.action_seed,
        steps: a.steps,
    };
    let bytes = match transcript::record(&spec) {
        Err(transcript::RecordError::UnknownEnv(e)) => return Err(Failure::Usage(e.to_string())),
        other => other?,
    };
    std::fs::write(&a.out, bytes)?;
    Ok(())
}

fn replay(a: &ReplayArgs) -> Outcome {
    let bytes = std::fs::read(&a.path).map_err(|e| Failure::Runtime(format!("{}: {e}", a.path.display())))?;
    match transcript::replay(&bytes, a.seed) {
        ReplayOutcome::Match { frames } => {
            println!("ok: {frames} frames match");
            Ok(())
        }
        ReplayOutcome::Diverged { frame, reason } => {
            println!("diverged at frame {frame}: {reason}");
            Err(Failure::Runtime(format!("transcript diverged at frame {frame}")))
        }
    }
}
