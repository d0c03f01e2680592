//! One agent pool behind the wire protocol, serving a single client over TCP.

use std::ffi::OsString;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Ipv4Addr, TcpListener, TcpStream};

use clap::{Args, Parser};
use thiserror::Error;

use crate::env::{Pool, PoolStats};
use crate::envs::{self, UnknownEnv, ENV_NAMES};
use crate::protocol::{self, Message, TransportError, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ServerConfig {
    /// Environment to host.
    #[arg(long = "env", value_name = "NAME")]
    pub env_name: String,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_agents: u32,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub action_repeat: u32,
    /// 0 picks an ephemeral port.
    #[arg(long, default_value_t = 0)]
    pub port: u16,
    /// Added to every reset seed the client sends.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Ipv4Addr::LOCALHOST.to_string())]
    pub host: String,
    /// Accepted for compatibility; the server never paces to real time.
    #[arg(long)]
    pub speedup: bool,
}

impl ServerConfig {
    pub fn new(env_name: &str, n_agents: u32, action_repeat: u32) -> Self {
        Self {
            env_name: env_name.to_owned(),
            n_agents,
            action_repeat,
            port: 0,
            seed: 0,
            host: Ipv4Addr::LOCALHOST.to_string(),
            speedup: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// What the session wants the transport to do after a request.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    /// Send the message and keep serving.
    Continue(Message),
    /// Send the acknowledgement and exit cleanly.
    Close(Message),
    /// Send the error message, then drop the connection.
    Fail(Message),
}

impl Reply {
    pub fn message(&self) -> &Message {
        match self {
            Reply::Continue(m) | Reply::Close(m) | Reply::Fail(m) => m,
        }
    }
}

/// The lockstep state machine, independent of any transport.
pub struct Session {
    pool: Box<dyn Pool>,
    seed_offset: u64,
}

impl Session {
    pub fn new(config: &ServerConfig) -> Result<Self, UnknownEnv> {
        let pool = envs::make_pool(&config.env_name, config.n_agents as usize, config.action_repeat)?;
        Ok(Self { pool, seed_offset: config.seed })
    }

    pub fn handshake(&self) -> Message {
        let def = self.pool.definition();
        Message::Handshake {
            env_name: def.name.clone(),
            n_agents: self.pool.n_agents() as u32,
            action_repeat: self.pool.action_repeat(),
            obs_space: def.obs_space.clone(),
            action_space: def.action_space.clone(),
            protocol_version: PROTOCOL_VERSION,
        }
    }

    pub fn stats(&self) -> PoolStats {
        self.pool.stats()
    }

    pub fn respond(&mut self, request: Message) -> Reply {
        match request {
            Message::ResetRequest { seed } => {
                let obs = self.pool.reset(self.seed_offset.wrapping_add(seed));
                Reply::Continue(Message::ResetResult { obs })
            }
            Message::StepRequest { actions } => match self.pool.step(&actions) {
                Ok(transitions) => Reply::Continue(Message::StepResult { transitions }),
                Err(e) => Reply::Fail(Message::Error { reason: e.to_string() }),
            },
            Message::Close => Reply::Close(Message::Close),
            other => Reply::Fail(Message::Error { reason: format!("unexpected `{}` from client", other.kind()) }),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    UnknownEnv(#[from] UnknownEnv),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// How a served connection ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shutdown {
    /// The client sent Close.
    Closed,
    /// The client went away without Close.
    Disconnected,
}

/// Run the request/response loop on an accepted connection.
pub fn serve_connection<R: Read, W: Write>(
    session: &mut Session,
    reader: &mut R,
    writer: &mut W,
) -> Result<Shutdown, ServeError> {
    send(writer, &session.handshake())?;
    loop {
        let request = match protocol::read_message(reader) {
            Ok(Some(m)) => m,
            Ok(None) | Err(TransportError::Truncated) => return Ok(Shutdown::Disconnected),
            Err(TransportError::Io(e)) if is_disconnect(&e) => return Ok(Shutdown::Disconnected),
            Err(TransportError::Io(e)) => return Err(e.into()),
            Err(e) => {
                let reason = e.to_string();
                // Best effort: the peer may already be gone.
                let _ = send(writer, &Message::Error { reason: reason.clone() });
                return Err(ServeError::Protocol(reason));
            }
        };
        match session.respond(request) {
            Reply::Continue(m) => send(writer, &m)?,
            Reply::Close(m) => {
                let _ = send(writer, &m);
                return Ok(Shutdown::Closed);
            }
            Reply::Fail(m) => {
                let _ = send(writer, &m);
                let Message::Error { reason } = m else { unreachable!() };
                return Err(ServeError::Protocol(reason));
            }
        }
    }
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted | io::ErrorKind::BrokenPipe
    )
}

fn send<W: Write>(writer: &mut W, message: &Message) -> Result<(), ServeError> {
    match protocol::write_message(writer, message) {
        Ok(()) => Ok(()),
        Err(TransportError::Io(e)) => Err(e.into()),
        Err(e) => Err(ServeError::Protocol(e.to_string())),
    }
}

pub fn bind(config: &ServerConfig) -> Result<TcpListener, ServeError> {
    let addr = format!("{}:{}", config.host, config.port);
    TcpListener::bind(&addr).map_err(|source| ServeError::Bind { addr, source })
}

/// Accept one client on `listener` and serve it to completion.
pub fn serve_listener(listener: TcpListener, config: &ServerConfig) -> Result<Shutdown, ServeError> {
    let mut session = Session::new(config)?;
    let (stream, _) = listener.accept()?;
    drop(listener);
    serve_stream(&mut session, stream)
}

pub fn serve_stream(session: &mut Session, stream: TcpStream) -> Result<Shutdown, ServeError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    serve_connection(session, &mut reader, &mut writer)
}

/// Bind, announce `PORT <n>` on `announce`, then serve one client.
pub fn serve<W: Write>(config: &ServerConfig, announce: &mut W) -> Result<Shutdown, ServeError> {
    // Validate the environment before binding so a typo never opens a port.
    envs::definition(&config.env_name)?;
    let listener = bind(config)?;
    writeln!(announce, "PORT {}", listener.local_addr()?.port())?;
    announce.flush()?;
    serve_listener(listener, config)
}

#[derive(Debug, Parser)]
#[command(name = "envbridge-server", about = "Serve an environment pool over the lockstep protocol")]
struct Cli {
    /// Print registered environment names and exit.
    #[arg(long, exclusive = true)]
    list_envs: bool,
    #[command(flatten)]
    config: Option<ServerConfig>,
}

pub fn list_envs<W: Write>(out: &mut W) -> io::Result<()> {
    for name in ENV_NAMES {
        writeln!(out, "{name}")?;
    }
    Ok(())
}

/// Entry point shared by the standalone binary and the `serve` subcommand.
/// Returns the process exit code: 0 clean, 2 usage, 1 runtime failure.
pub fn run_config(config: &ServerConfig) -> i32 {
    if let Err(e) = envs::definition(&config.env_name) {
        eprintln!("error: {e}");
        return 2;
    }
    let stdout = io::stdout();
    match serve(config, &mut stdout.lock()) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run_cli<I, T>(args: I) -> i32
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
    if cli.list_envs {
        return match list_envs(&mut io::stdout()) {
            Ok(()) => 0,
            Err(_) => 1,
        };
    }
    match cli.config {
        Some(config) => run_config(&config),
        None => {
            eprintln!("error: --env is required (valid: {})", ENV_NAMES.join(", "));
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{PartValue, PartValues};

    fn session(env: &str, n: u32) -> Session {
        Session::new(&ServerConfig::new(env, n, 4)).unwrap()
    }

    fn idle_ball_chase(n: usize) -> Vec<PartValues> {
        vec![PartValues::new().with("move", PartValue::Box(vec![0.0, 0.0])); n]
    }

    #[test]
    fn handshake_echoes_registry() {
        let s = session("ball_chase", 16);
        let Message::Handshake { env_name, n_agents, action_repeat, obs_space, protocol_version, .. } = s.handshake()
        else {
            panic!("not a handshake")
        };
        assert_eq!(env_name, "ball_chase");
        assert_eq!((n_agents, action_repeat, protocol_version), (16, 4, 1));
        assert_eq!(obs_space.flat_width(), 35);
    }

    #[test]
    fn step_before_reset_is_a_protocol_error() {
        let mut s = session("ball_chase", 2);
        let reply = s.respond(Message::StepRequest { actions: idle_ball_chase(2) });
        assert_eq!(reply, Reply::Fail(Message::Error { reason: "step before reset".into() }));
    }

    #[test]
    fn server_messages_from_client_are_rejected() {
        let mut s = session("fly_by", 1);
        assert!(matches!(s.respond(Message::ResetResult { obs: vec![] }), Reply::Fail(_)));
        assert!(matches!(s.respond(s.handshake()), Reply::Fail(_)));
    }

    #[test]
    fn close_is_acknowledged() {
        let mut s = session("jumper", 1);
        assert_eq!(s.respond(Message::Close), Reply::Close(Message::Close));
    }

    #[test]
    fn seed_flag_offsets_reset_seed() {
        let mut a = Session::new(&ServerConfig::new("ball_chase", 2, 4).with_seed(5)).unwrap();
        let mut b = session("ball_chase", 2);
        assert_eq!(a.respond(Message::ResetRequest { seed: 2 }), b.respond(Message::ResetRequest { seed: 7 }));
    }

    #[test]
    fn connection_loop_over_buffers() {
        let mut input = Vec::new();
        for m in [
            Message::ResetRequest { seed: 7 },
            Message::StepRequest { actions: idle_ball_chase(3) },
            Message::Close,
        ] {
            input.extend(protocol::encode_frame(&m).unwrap());
        }
        let mut s = session("ball_chase", 3);
        let mut output = Vec::new();
        let end = serve_connection(&mut s, &mut input.as_slice(), &mut output).unwrap();
        assert_eq!(end, Shutdown::Closed);
        let mut decoder = protocol::FrameDecoder::new();
        decoder.extend(&output);
        let kinds: Vec<&str> = std::iter::from_fn(|| decoder.next_message().unwrap()).map(|m| m.kind()).collect();
        assert_eq!(kinds, ["handshake", "reset_result", "step_result", "close"]);
    }

    #[test]
    fn eof_without_close_is_a_clean_disconnect() {
        let input = protocol::encode_frame(&Message::ResetRequest { seed: 1 }).unwrap();
        let mut s = session("fly_by", 1);
        let end = serve_connection(&mut s, &mut input.as_slice(), &mut Vec::new()).unwrap();
        assert_eq!(end, Shutdown::Disconnected);
        // A frame cut short is also just a disconnect.
        let end = serve_connection(&mut s, &mut &input[..input.len() - 3], &mut Vec::new()).unwrap();
        assert_eq!(end, Shutdown::Disconnected);
    }

    #[test]
    fn garbage_gets_an_error_reply() {
        let mut input = vec![0, 0, 0, 3];
        input.extend_from_slice(b"{x}");
        let mut s = session("fly_by", 1);
        let mut output = Vec::new();
        assert!(matches!(serve_connection(&mut s, &mut input.as_slice(), &mut output), Err(ServeError::Protocol(_))));
        let mut decoder = protocol::FrameDecoder::new();
        decoder.extend(&output);
        assert_eq!(decoder.next_message().unwrap().unwrap().kind(), "handshake");
        assert_eq!(decoder.next_message().unwrap().unwrap().kind(), "error");
    }

    #[test]
    fn cli_exit_codes() {
        assert_eq!(run_cli(["envbridge-server", "--env", "nosuch"]), 2);
        assert_eq!(run_cli(["envbridge-server"]), 2);
        assert_eq!(run_cli(["envbridge-server", "--env", "jumper", "--n-agents", "0"]), 2);
        assert_eq!(run_cli(["envbridge-server", "--list-envs"]), 0);
    }
}
