//! Recorded sessions: concatenated frames, server handshake first, then
//! alternating client request and server response.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::UnknownEnv;
use crate::protocol::{self, Decoded, EncodeError, Message};
use crate::server::{Reply, ServerConfig, Session};

/// Parameters of a recorded random-policy session.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSpec {
    pub env_name: String,
    pub n_agents: u32,
    pub action_repeat: u32,
    pub reset_seed: u64,
    pub action_seed: u64,
    pub steps: usize,
}

impl RecordSpec {
    pub fn new(env_name: &str) -> Self {
        Self { env_name: env_name.to_owned(), n_agents: 2, action_repeat: 4, reset_seed: 7, action_seed: 11, steps: 200 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error(transparent)]
    UnknownEnv(#[from] UnknownEnv),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("server rejected request {index}: {reason}")]
    Rejected { index: usize, reason: String },
}

/// Run a uniform-random policy against an in-process session and capture every frame.
pub fn record(spec: &RecordSpec) -> Result<Vec<u8>, RecordError> {
    let config = ServerConfig::new(&spec.env_name, spec.n_agents, spec.action_repeat);
    let mut session = Session::new(&config)?;
    let action_space = match session.handshake() {
        Message::Handshake { action_space, .. } => action_space,
        _ => unreachable!(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.action_seed);
    let mut out = Vec::new();
    protocol::encode_frame_into(&session.handshake(), &mut out)?;

    let requests = std::iter::once(Message::ResetRequest { seed: spec.reset_seed })
        .chain((0..spec.steps).map(|_| Message::StepRequest {
            actions: (0..spec.n_agents).map(|_| action_space.sample(&mut rng)).collect(),
        }))
        .chain(std::iter::once(Message::Close));
    for (index, request) in requests.enumerate() {
        protocol::encode_frame_into(&request, &mut out)?;
        let reply = session.respond(request);
        protocol::encode_frame_into(reply.message(), &mut out)?;
        if let Reply::Fail(Message::Error { reason }) = reply {
            return Err(RecordError::Rejected { index, reason });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayOutcome {
    Match { frames: usize },
    Diverged { frame: usize, reason: String },
}

fn diverged(frame: usize, reason: impl Into<String>) -> ReplayOutcome {
    ReplayOutcome::Diverged { frame, reason: reason.into() }
}

/// Split a transcript into raw frames, stopping at the first unframeable one.
fn split_frames(mut bytes: &[u8]) -> (Vec<&[u8]>, Option<String>) {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return (frames, Some("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if len > protocol::MAX_PAYLOAD || 4 + len > bytes.len() {
            return (frames, Some(format!("frame length {len} exceeds the remaining transcript")));
        }
        frames.push(&bytes[..4 + len]);
        bytes = &bytes[4 + len..];
    }
    (frames, None)
}

fn decode_one(frame: &[u8]) -> Result<Message, String> {
    match protocol::decode_frame(frame) {
        Ok(Decoded::Frame(m, rest)) if rest.is_empty() => Ok(m),
        Ok(_) => Err("frame does not decode as a single message".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Feed the recorded client frames to a fresh in-process server and compare
/// every response byte for byte. `seed_offset` plays the role of `--seed`.
pub fn replay(bytes: &[u8], seed_offset: u64) -> ReplayOutcome {
    let (frames, framing_error) = split_frames(bytes);
    let Some(first) = frames.first() else {
        return diverged(0, framing_error.unwrap_or_else(|| "empty transcript".into()));
    };
    let (env_name, n_agents, action_repeat) = match decode_one(first) {
        Ok(Message::Handshake { env_name, n_agents, action_repeat, .. }) => (env_name, n_agents, action_repeat),
        Ok(other) => return diverged(0, format!("expected handshake, found `{}`", other.kind())),
        Err(reason) => return diverged(0, reason),
    };
    if n_agents == 0 || action_repeat == 0 {
        return diverged(0, "handshake declares an empty pool");
    }
    let config = ServerConfig::new(&env_name, n_agents, action_repeat).with_seed(seed_offset);
    let mut session = match Session::new(&config) {
        Ok(s) => s,
        Err(e) => return diverged(0, e.to_string()),
    };
    let compare = |index: usize, expected: &Message| -> Option<ReplayOutcome> {
        let Some(recorded) = frames.get(index) else {
            return Some(diverged(index, "transcript ends before this response"));
        };
        match protocol::encode_frame(expected) {
            Ok(bytes) if bytes.as_slice() == *recorded => None,
            Ok(_) => Some(diverged(index, format!("`{}` response differs", expected.kind()))),
            Err(e) => Some(diverged(index, e.to_string())),
        }
    };
    if let Some(d) = compare(0, &session.handshake()) {
        return d;
    }

    let mut index = 1;
    loop {
        let Some(recorded) = frames.get(index) else {
            return match framing_error {
                Some(reason) => diverged(index, reason),
                None => ReplayOutcome::Match { frames: index },
            };
        };
        let request = match decode_one(recorded) {
            Ok(m) if m.is_client_message() => m,
            Ok(m) => return diverged(index, format!("expected a client request, found `{}`", m.kind())),
            Err(reason) => return diverged(index, reason),
        };
        // Encoding is canonical, so a well-formed recording re-encodes to itself.
        match protocol::encode_frame(&request) {
            Ok(bytes) if bytes.as_slice() == *recorded => {}
            _ => return diverged(index, "client frame is not in canonical form"),
        }
        let reply = session.respond(request);
        if let Some(d) = compare(index + 1, reply.message()) {
            return d;
        }
        index += 2;
        if !matches!(reply, Reply::Continue(_)) {
            if index < frames.len() || framing_error.is_some() {
                return diverged(index, "frames after the session ended");
            }
            return ReplayOutcome::Match { frames: index };
        }
    }
}
