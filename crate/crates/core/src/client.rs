//! Trainer-side vectorized environment over P server processes of M agents.
//!
//! Flat agent `k` lives in process `k / M` as local agent `k % M`. Each process
//! gets its own connection thread so the P requests of a step are in flight
//! together; the caller blocks until all P answers arrive (or one fails).

use std::ffi::OsString;
use std::io::{self, BufRead, BufReader, BufWriter};
use std::net::{Ipv4Addr, SocketAddr, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Pool;
use crate::envs::{self, UnknownEnv};
use crate::protocol::{self, Message, PartValues, SpaceSpec, Transition, Violation, PROTOCOL_VERSION};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Seed stride between server processes; agent streams within a process use `seed + i`.
pub const PROCESS_SEED_STRIDE: u64 = 1000;
pub const SERVER_BIN_VAR: &str = "ENVBRIDGE_SERVER_BIN";
pub const SERVER_BIN_NAME: &str = "envbridge-server";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("server process {process}: spawn failed: {source}")]
    Spawn { process: usize, source: io::Error },
    #[error("server process {process}: {reason}")]
    Launch { process: usize, reason: String },
    #[error("server process {process}: handshake mismatch: {reason}")]
    HandshakeMismatch { process: usize, reason: String },
    #[error("server process {process}: {reason}")]
    Session { process: usize, reason: String },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("agent {agent}: invalid action: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidAction { agent: usize, violations: Vec<Violation> },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    UnknownEnv(#[from] UnknownEnv),
}

impl ClientError {
    /// Errors caused by the caller rather than by a server.
    pub fn is_usage(&self) -> bool {
        matches!(self, ClientError::Usage(_) | ClientError::InvalidAction { .. } | ClientError::UnknownEnv(_))
    }
}

/// How to start one server process.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerCommand {
    pub program: PathBuf,
    /// Placed before the server flags, e.g. a `serve` subcommand.
    pub prefix_args: Vec<OsString>,
}

impl ServerCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self { program: program.into(), prefix_args: Vec::new() }
    }

    pub fn with_prefix(mut self, arg: impl Into<OsString>) -> Self {
        self.prefix_args.push(arg.into());
        self
    }

    /// `$ENVBRIDGE_SERVER_BIN`, else `envbridge-server` next to (or one level
    /// above) the running executable, else `envbridge-server` on `PATH`.
    pub fn resolve() -> Self {
        if let Some(path) = std::env::var_os(SERVER_BIN_VAR).filter(|p| !p.is_empty()) {
            return Self::new(path);
        }
        let exe_name = format!("{SERVER_BIN_NAME}{}", std::env::consts::EXE_SUFFIX);
        if let Ok(exe) = std::env::current_exe() {
            for dir in exe.ancestors().skip(1).take(2) {
                let candidate = dir.join(&exe_name);
                if candidate.is_file() {
                    return Self::new(candidate);
                }
            }
        }
        Self::new(SERVER_BIN_NAME)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaunchConfig {
    pub env_name: String,
    pub processes: usize,
    pub agents_per_process: u32,
    pub action_repeat: u32,
    pub base_seed: u64,
    /// Explicit per-process seeds; overrides the `base_seed + 1000·p` default.
    pub process_seeds: Option<Vec<u64>>,
    pub server: ServerCommand,
    pub timeout: Duration,
}

impl LaunchConfig {
    pub fn new(env_name: &str, processes: usize, agents_per_process: u32, action_repeat: u32) -> Self {
        Self {
            env_name: env_name.to_owned(),
            processes,
            agents_per_process,
            action_repeat,
            base_seed: 0,
            process_seeds: None,
            server: ServerCommand::resolve(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_base_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_process_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.process_seeds = Some(seeds);
        self
    }

    pub fn with_server(mut self, server: ServerCommand) -> Self {
        self.server = server;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn process_seed(&self, p: usize) -> u64 {
        match &self.process_seeds {
            Some(seeds) => seeds[p],
            None => self.base_seed.wrapping_add(PROCESS_SEED_STRIDE.wrapping_mul(p as u64)),
        }
    }

    fn check(&self) -> Result<(), ClientError> {
        if self.processes == 0 || self.agents_per_process == 0 || self.action_repeat == 0 {
            return Err(ClientError::Usage("processes, agents and action repeat must be at least 1".into()));
        }
        if self.process_seeds.as_ref().is_some_and(|s| s.len() != self.processes) {
            return Err(ClientError::Usage("need exactly one seed per process".into()));
        }
        Ok(())
    }
}

/// What every process agreed on at handshake.
#[derive(Debug, Clone, PartialEq)]
pub struct VecEnvSpec {
    pub env_name: String,
    pub processes: usize,
    pub agents_per_process: usize,
    pub action_repeat: u32,
    pub obs_space: SpaceSpec,
    pub action_space: SpaceSpec,
}

impl VecEnvSpec {
    pub fn total_agents(&self) -> usize {
        self.processes * self.agents_per_process
    }

    /// Flat agent index → (process, local agent).
    pub fn locate(&self, k: usize) -> (usize, usize) {
        (k / self.agents_per_process, k % self.agents_per_process)
    }

    pub fn flat_index(&self, process: usize, local: usize) -> usize {
        process * self.agents_per_process + local
    }
}

/// A flat batch of agents with lockstep reset/step, local or remote.
pub trait VecEnv {
    fn spec(&self) -> &VecEnvSpec;
    fn reset(&mut self, seed: u64) -> Result<Vec<PartValues>, ClientError>;
    fn step(&mut self, actions: &[PartValues]) -> Result<Vec<Transition>, ClientError>;

    fn num_agents(&self) -> usize {
        self.spec().total_agents()
    }
}

fn check_actions(spec: &VecEnvSpec, actions: &[PartValues]) -> Result<(), ClientError> {
    if actions.len() != spec.total_agents() {
        return Err(ClientError::Usage(format!("expected {} actions, got {}", spec.total_agents(), actions.len())));
    }
    for (agent, action) in actions.iter().enumerate() {
        spec.action_space.validate(action).map_err(|violations| ClientError::InvalidAction { agent, violations })?;
    }
    Ok(())
}

/// Concatenate per-process results in process order, whatever order they arrived in.
pub fn gather_in_order<T>(processes: usize, arrivals: impl IntoIterator<Item = (usize, Vec<T>)>) -> Vec<T> {
    let mut slots: Vec<Option<Vec<T>>> = (0..processes).map(|_| None).collect();
    for (p, items) in arrivals {
        assert!(slots[p].replace(items).is_none(), "process {p} answered twice");
    }
    slots.into_iter().enumerate().flat_map(|(p, s)| s.unwrap_or_else(|| panic!("process {p} missing"))).collect()
}

type WorkerResult = (usize, Result<Message, String>);

struct Connection {
    jobs: Option<Sender<Message>>,
    thread: Option<JoinHandle<()>>,
}

fn connection_loop(
    process: usize,
    stream: TcpStream,
    jobs: Receiver<Message>,
    results: Sender<WorkerResult>,
) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    for request in jobs {
        let outcome = protocol::write_message(&mut writer, &request)
            .and_then(|()| protocol::read_message(&mut reader))
            .map_err(|e| e.to_string())
            .and_then(|reply| reply.ok_or_else(|| "connection closed by server".to_owned()));
        let failed = outcome.is_err();
        if results.send((process, outcome)).is_err() || failed {
            break;
        }
    }
    Ok(())
}

/// P live server processes behind one flat agent index.
pub struct VectorEnv {
    spec: VecEnvSpec,
    children: Vec<Child>,
    connections: Vec<Connection>,
    results: Receiver<WorkerResult>,
    timeout: Duration,
    closed: bool,
}

fn kill_and_reap(children: &mut [Child]) {
    for child in children.iter_mut() {
        let _ = child.kill();
    }
    for child in children.iter_mut() {
        let _ = child.wait();
    }
}

fn harvest_port(child: &mut Child, timeout: Duration) -> Result<u16, String> {
    let stdout = child.stdout.take().ok_or("stdout not captured")?;
    let (tx, rx) = mpsc::channel();
    // Keeps draining after the port line so the server never blocks on a full pipe.
    thread::spawn(move || {
        let mut tx = Some(tx);
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if let Some(port) = line.strip_prefix("PORT ") {
                if let Some(tx) = tx.take() {
                    let _ = tx.send(port.trim().parse::<u16>().map_err(|e| format!("bad port line `{line}`: {e}")));
                }
            }
        }
    });
    match rx.recv_timeout(timeout) {
        Ok(port) => port,
        Err(RecvTimeoutError::Timeout) => Err(format!("no PORT line within {timeout:?}")),
        Err(RecvTimeoutError::Disconnected) => {
            let status = child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
            Err(format!("exited before announcing a port ({status})"))
        }
    }
}

fn connect(port: u16, timeout: Duration) -> io::Result<(TcpStream, Message)> {
    let stream = TcpStream::connect_timeout(&SocketAddr::from((Ipv4Addr::LOCALHOST, port)), timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    let handshake = protocol::read_message(&mut &stream)
        .map_err(io::Error::other)?
        .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "closed before handshake"))?;
    Ok((stream, handshake))
}

fn check_handshake(config: &LaunchConfig, handshake: Message) -> Result<VecEnvSpec, String> {
    let Message::Handshake { env_name, n_agents, action_repeat, obs_space, action_space, protocol_version } = handshake
    else {
        return Err(format!("expected handshake, got `{}`", handshake.kind()));
    };
    if protocol_version != PROTOCOL_VERSION {
        return Err(format!("protocol version {protocol_version}, expected {PROTOCOL_VERSION}"));
    }
    if env_name != config.env_name {
        return Err(format!("serves `{env_name}`, expected `{}`", config.env_name));
    }
    if n_agents != config.agents_per_process || action_repeat != config.action_repeat {
        return Err(format!(
            "{n_agents} agents with repeat {action_repeat}, expected {} with repeat {}",
            config.agents_per_process, config.action_repeat
        ));
    }
    Ok(VecEnvSpec {
        env_name,
        processes: config.processes,
        agents_per_process: n_agents as usize,
        action_repeat,
        obs_space,
        action_space,
    })
}

impl VectorEnv {
    /// Spawn and connect P servers. On any failure every spawned process is killed and reaped.
    pub fn launch(config: &LaunchConfig) -> Result<Self, ClientError> {
        config.check()?;
        let mut children = Vec::with_capacity(config.processes);
        let result = Self::launch_into(config, &mut children);
        if result.is_err() {
            kill_and_reap(&mut children);
        }
        result
    }

    fn launch_into(config: &LaunchConfig, children: &mut Vec<Child>) -> Result<Self, ClientError> {
        for p in 0..config.processes {
            let child = Command::new(&config.server.program)
                .args(&config.server.prefix_args)
                .arg("--env")
                .arg(&config.env_name)
                .arg("--n-agents")
                .arg(config.agents_per_process.to_string())
                .arg("--action-repeat")
                .arg(config.action_repeat.to_string())
                .arg("--port")
                .arg("0")
                .arg("--seed")
                .arg(config.process_seed(p).to_string())
                .stdin(Stdio::null())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|source| ClientError::Spawn { process: p, source })?;
            children.push(child);
        }

        let (result_tx, results) = mpsc::channel();
        let mut connections = Vec::with_capacity(config.processes);
        let mut spec: Option<VecEnvSpec> = None;
        for (p, child) in children.iter_mut().enumerate() {
            let port = harvest_port(child, config.timeout).map_err(|reason| ClientError::Launch { process: p, reason })?;
            let (stream, handshake) = connect(port, config.timeout)
                .map_err(|e| ClientError::Launch { process: p, reason: format!("connect to port {port}: {e}") })?;
            let this = check_handshake(config, handshake)
                .map_err(|reason| ClientError::HandshakeMismatch { process: p, reason })?;
            match &spec {
                None => spec = Some(this),
                Some(first) if *first != this => {
                    return Err(ClientError::HandshakeMismatch {
                        process: p,
                        reason: "spaces differ from process 0".into(),
                    })
                }
                Some(_) => {}
            }
            let (job_tx, job_rx) = mpsc::channel();
            let tx = result_tx.clone();
            let thread = thread::Builder::new()
                .name(format!("envbridge-conn-{p}"))
                .spawn(move || {
                    let _ = connection_loop(p, stream, job_rx, tx);
                })
                .map_err(|e| ClientError::Launch { process: p, reason: e.to_string() })?;
            connections.push(Connection { jobs: Some(job_tx), thread: Some(thread) });
        }
        Ok(Self {
            spec: spec.expect("at least one process"),
            children: std::mem::take(children),
            connections,
            results,
            timeout: config.timeout,
            closed: false,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// OS process ids of the servers, in process order.
    pub fn server_pids(&self) -> Vec<u32> {
        self.children.iter().map(Child::id).collect()
    }

    /// Send one request per process and wait for all answers, in process order.
    fn round_trip(&mut self, requests: Vec<Message>) -> Result<Vec<Message>, ClientError> {
        if self.closed {
            return Err(ClientError::Usage("vector environment is closed".into()));
        }
        let result = self.round_trip_inner(requests);
        if result.is_err() {
            self.abort();
        }
        result
    }

    fn round_trip_inner(&mut self, requests: Vec<Message>) -> Result<Vec<Message>, ClientError> {
        let n = requests.len();
        for (p, request) in requests.into_iter().enumerate() {
            let sent = self.connections[p].jobs.as_ref().is_some_and(|jobs| jobs.send(request).is_ok());
            if !sent {
                return Err(ClientError::Session { process: p, reason: "connection is gone".into() });
            }
        }
        let deadline = Instant::now() + self.timeout;
        let mut arrivals = Vec::with_capacity(n);
        while arrivals.len() < n {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.results.recv_timeout(left) {
                Ok((p, Ok(Message::Error { reason }))) => return Err(ClientError::Session { process: p, reason }),
                Ok((p, Ok(reply))) => arrivals.push((p, vec![reply])),
                Ok((p, Err(reason))) => return Err(ClientError::Session { process: p, reason }),
                Err(_) => return Err(ClientError::Timeout(self.timeout)),
            }
        }
        Ok(gather_in_order(n, arrivals))
    }

    fn expect_len(process: usize, what: &str, found: usize, expected: usize) -> Result<(), ClientError> {
        if found == expected {
            Ok(())
        } else {
            Err(ClientError::Session { process, reason: format!("{what} for {found} agents, expected {expected}") })
        }
    }

    fn unexpected(&mut self, process: usize, reply: &Message) -> ClientError {
        self.abort();
        ClientError::Session { process, reason: format!("unexpected `{}` reply", reply.kind()) }
    }

    /// Kill and reap every server. Used after a failure; nothing is sent.
    fn abort(&mut self) {
        self.closed = true;
        for c in &mut self.connections {
            c.jobs = None;
        }
        kill_and_reap(&mut self.children);
        for c in &mut self.connections {
            if let Some(t) = c.thread.take() {
                let _ = t.join();
            }
        }
    }

    /// Say goodbye to every server, then reap them. Idempotent.
    pub fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let mut expected = 0;
        for c in &mut self.connections {
            if let Some(jobs) = c.jobs.take() {
                if jobs.send(Message::Close).is_ok() {
                    expected += 1;
                }
            }
        }
        let grace = Duration::from_secs(2).min(self.timeout);
        let deadline = Instant::now() + grace;
        for _ in 0..expected {
            let left = deadline.saturating_duration_since(Instant::now());
            if self.results.recv_timeout(left).is_err() {
                break;
            }
        }
        for child in &mut self.children {
            while Instant::now() < deadline {
                match child.try_wait() {
                    Ok(Some(_)) | Err(_) => break,
                    Ok(None) => thread::sleep(Duration::from_millis(5)),
                }
            }
        }
        kill_and_reap(&mut self.children);
        for c in &mut self.connections {
            if let Some(t) = c.thread.take() {
                let _ = t.join();
            }
        }
    }
}

impl VecEnv for VectorEnv {
    fn spec(&self) -> &VecEnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<PartValues>, ClientError> {
        let replies = self.round_trip(vec![Message::ResetRequest { seed }; self.spec.processes])?;
        let m = self.spec.agents_per_process;
        let mut out = Vec::with_capacity(self.spec.total_agents());
        for (p, reply) in replies.into_iter().enumerate() {
            match reply {
                Message::ResetResult { obs } => {
                    if let Err(e) = Self::expect_len(p, "reset result", obs.len(), m) {
                        self.abort();
                        return Err(e);
                    }
                    out.extend(obs);
                }
                other => return Err(self.unexpected(p, &other)),
            }
        }
        Ok(out)
    }

    fn step(&mut self, actions: &[PartValues]) -> Result<Vec<Transition>, ClientError> {
        if self.closed {
            return Err(ClientError::Usage("vector environment is closed".into()));
        }
        check_actions(&self.spec, actions)?;
        let m = self.spec.agents_per_process;
        let requests = actions.chunks(m).map(|chunk| Message::StepRequest { actions: chunk.to_vec() }).collect();
        let replies = self.round_trip(requests)?;
        let mut out = Vec::with_capacity(self.spec.total_agents());
        for (p, reply) in replies.into_iter().enumerate() {
            match reply {
                Message::StepResult { transitions } => {
                    if let Err(e) = Self::expect_len(p, "step result", transitions.len(), m) {
                        self.abort();
                        return Err(e);
                    }
                    out.extend(transitions);
                }
                other => return Err(self.unexpected(p, &other)),
            }
        }
        Ok(out)
    }
}

impl Drop for VectorEnv {
    fn drop(&mut self) {
        self.close();
    }
}

/// The same flat interface over in-process pools, with the same seeding as
/// [`VectorEnv`]: pool `p` resets with `process_seed(p) + seed`.
pub struct LocalVecEnv {
    spec: VecEnvSpec,
    pools: Vec<Box<dyn Pool>>,
    seeds: Vec<u64>,
}

impl LocalVecEnv {
    pub fn new(config: &LaunchConfig) -> Result<Self, ClientError> {
        config.check()?;
        let def = envs::definition(&config.env_name)?;
        let pools = (0..config.processes)
            .map(|_| envs::make_pool(&config.env_name, config.agents_per_process as usize, config.action_repeat))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec: VecEnvSpec {
                env_name: def.name,
                processes: config.processes,
                agents_per_process: config.agents_per_process as usize,
                action_repeat: config.action_repeat,
                obs_space: def.obs_space,
                action_space: def.action_space,
            },
            pools,
            seeds: (0..config.processes).map(|p| config.process_seed(p)).collect(),
        })
    }
}

impl VecEnv for LocalVecEnv {
    fn spec(&self) -> &VecEnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<PartValues>, ClientError> {
        Ok(self.pools.iter_mut().zip(&self.seeds).flat_map(|(pool, s)| pool.reset(s.wrapping_add(seed))).collect())
    }

    fn step(&mut self, actions: &[PartValues]) -> Result<Vec<Transition>, ClientError> {
        check_actions(&self.spec, actions)?;
        let mut out = Vec::with_capacity(actions.len());
        for (p, (pool, chunk)) in self.pools.iter_mut().zip(actions.chunks(self.spec.agents_per_process)).enumerate() {
            out.extend(pool.step(chunk).map_err(|e| ClientError::Session { process: p, reason: e.to_string() })?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub env: String,
    pub processes: usize,
    pub agents_per_process: usize,
    pub action_repeat: u32,
    pub duration_secs: f64,
    pub policy_steps_per_sec: f64,
    pub frames_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub launch: LaunchConfig,
    pub duration: Duration,
    pub warmup: Duration,
    pub policy_seed: u64,
}

impl BenchmarkConfig {
    pub fn new(launch: LaunchConfig, duration: Duration) -> Self {
        Self { launch, duration, warmup: Duration::from_secs(2), policy_seed: 0 }
    }
}

/// Drive `env` with a uniform-random policy: `warmup` untimed, then `duration` timed.
/// Returns agent-steps taken in the timed window and its exact length.
pub fn drive_random<V: VecEnv + ?Sized>(
    env: &mut V,
    warmup: Duration,
    duration: Duration,
    policy_seed: u64,
) -> Result<(u64, Duration), ClientError> {
    let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
    let n = env.num_agents();
    let space = env.spec().action_space.clone();
    env.reset(policy_seed)?;
    let mut actions: Vec<PartValues> = Vec::with_capacity(n);
    let mut run = |env: &mut V, budget: Duration| -> Result<(u64, Duration), ClientError> {
        let start = Instant::now();
        let mut steps = 0;
        loop {
            let elapsed = start.elapsed();
            if elapsed >= budget {
                return Ok((steps, elapsed));
            }
            actions.clear();
            actions.extend((0..n).map(|_| space.sample(&mut rng)));
            env.step(&actions)?;
            steps += n as u64;
        }
    };
    run(env, warmup)?;
    run(env, duration)
}

pub fn benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport, ClientError> {
    if config.duration < Duration::from_secs(1) {
        return Err(ClientError::Usage("benchmark duration must be at least 1 s".into()));
    }
    let mut env = VectorEnv::launch(&config.launch)?;
    let (steps, elapsed) = drive_random(&mut env, config.warmup, config.duration, config.policy_seed)?;
    env.close();
    let policy_steps_per_sec = steps as f64 / elapsed.as_secs_f64();
    let repeat = config.launch.action_repeat;
    Ok(BenchmarkReport {
        env: config.launch.env_name.clone(),
        processes: config.launch.processes,
        agents_per_process: config.launch.agents_per_process as usize,
        action_repeat: repeat,
        duration_secs: elapsed.as_secs_f64(),
        policy_steps_per_sec,
        frames_per_sec: policy_steps_per_sec * f64::from(repeat),
    })
}
