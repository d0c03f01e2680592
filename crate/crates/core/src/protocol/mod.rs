//! Wire protocol between trainer and environment server.
//!
//! The exchange is strict lockstep: the server opens with a handshake, then
//! every client request receives exactly one response.

mod codec;
mod message;
mod space;

pub use codec::{
    decode_frame, encode_frame, encode_frame_into, read_frame_bytes, read_message, write_message, Decoded,
    EncodeError, FrameDecoder, ProtocolError, ProtocolErrorKind, TransportError, MAX_PAYLOAD,
};
pub use message::{Message, Transition};
pub use space::{PartKind, PartSpec, PartValue, PartValues, SpaceError, SpaceSpec, Violation};

/// Version carried in every handshake. Peers reject any other value.
pub const PROTOCOL_VERSION: u32 = 1;
