use serde::{Deserialize, Serialize};

use super::space::{PartValues, SpaceSpec};

/// Per-agent outcome of one lockstep step.
///
/// When `done` is set, `obs` is already the first observation of the next
/// (auto-reset) episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub obs: PartValues,
    pub reward: f64,
    pub done: bool,
}

/// Every message that crosses the wire. The `type` tag is always the first key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    /// Sent by the server as soon as a client connects.
    Handshake {
        env_name: String,
        n_agents: u32,
        action_repeat: u32,
        obs_space: SpaceSpec,
        action_space: SpaceSpec,
        protocol_version: u32,
    },
    #[serde(rename = "reset")]
    ResetRequest { seed: u64 },
    #[serde(rename = "step")]
    StepRequest { actions: Vec<PartValues> },
    StepResult { transitions: Vec<Transition> },
    ResetResult { obs: Vec<PartValues> },
    /// Client request to end the session; the server echoes it back before exiting.
    Close,
    /// Server-side failure report, sent just before the server drops the connection.
    Error { reason: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Handshake { .. } => "handshake",
            Message::ResetRequest { .. } => "reset",
            Message::StepRequest { .. } => "step",
            Message::StepResult { .. } => "step_result",
            Message::ResetResult { .. } => "reset_result",
            Message::Close => "close",
            Message::Error { .. } => "error",
        }
    }

    /// Whether a client is allowed to send this message.
    pub fn is_client_message(&self) -> bool {
        matches!(self, Message::ResetRequest { .. } | Message::StepRequest { .. } | Message::Close)
    }

    pub(crate) fn all_finite(&self) -> bool {
        match self {
            Message::StepRequest { actions } => actions.iter().all(PartValues::all_finite),
            Message::StepResult { transitions } => {
                transitions.iter().all(|t| t.reward.is_finite() && t.obs.all_finite())
            }
            Message::ResetResult { obs } => obs.iter().all(PartValues::all_finite),
            _ => true,
        }
    }
}
