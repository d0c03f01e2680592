//! Length-prefixed framing.
//!
//! A frame is a 4-byte big-endian payload length followed by that many bytes of
//! compact UTF-8 JSON. Encoding is canonical: keys follow the schema order,
//! there is no whitespace, and floats use the shortest representation that
//! parses back to the same bits.

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

use super::message::Message;

/// Largest accepted payload, in bytes (64 MiB).
pub const MAX_PAYLOAD: usize = 1 << 26;

const PREFIX: usize = 4;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte cap")]
    Oversize(usize),
    #[error("message contains a non-finite number")]
    NonFinite,
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolErrorKind {
    /// Declared length exceeds [`MAX_PAYLOAD`].
    LengthCap,
    /// Payload is not well-formed JSON (or not UTF-8).
    Malformed,
    /// Well-formed JSON that does not match the message schema.
    Schema,
}

/// A decoding failure, located by byte offset from the start of the frame.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ProtocolError {
    pub kind: ProtocolErrorKind,
    pub offset: usize,
    pub reason: String,
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ProtocolErrorKind::LengthCap => "length cap exceeded",
            ProtocolErrorKind::Malformed => "malformed payload",
            ProtocolErrorKind::Schema => "schema violation",
        };
        write!(f, "{kind} at byte {}: {}", self.offset, self.reason)
    }
}

/// Result of a decode attempt on a buffer that may hold a partial frame.
#[derive(Debug, PartialEq)]
pub enum Decoded<'a> {
    /// One complete frame; the slice is the untouched remainder of the input.
    Frame(Message, &'a [u8]),
    NeedMore,
}

pub fn encode_frame(message: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(256);
    encode_frame_into(message, &mut out)?;
    Ok(out)
}

/// Append one encoded frame to `out`. On error `out` is left unchanged.
pub fn encode_frame_into(message: &Message, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    if !message.all_finite() {
        return Err(EncodeError::NonFinite);
    }
    let start = out.len();
    out.extend_from_slice(&[0; PREFIX]);
    if let Err(e) = serde_json::to_writer(&mut *out, message) {
        out.truncate(start);
        return Err(e.into());
    }
    let len = out.len() - start - PREFIX;
    if len > MAX_PAYLOAD {
        out.truncate(start);
        return Err(EncodeError::Oversize(len));
    }
    out[start..start + PREFIX].copy_from_slice(&(len as u32).to_be_bytes());
    Ok(())
}

/// Declared payload length if at least the prefix is present.
fn declared_len(bytes: &[u8]) -> Result<Option<usize>, ProtocolError> {
    if bytes.len() < PREFIX {
        return Ok(None);
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError {
            kind: ProtocolErrorKind::LengthCap,
            offset: 0,
            reason: format!("declared payload of {len} bytes exceeds {MAX_PAYLOAD}"),
        });
    }
    Ok(Some(len))
}

pub fn decode_frame(bytes: &[u8]) -> Result<Decoded<'_>, ProtocolError> {
    let Some(len) = declared_len(bytes)? else {
        return Ok(Decoded::NeedMore);
    };
    if bytes.len() < PREFIX + len {
        return Ok(Decoded::NeedMore);
    }
    let message = decode_payload(&bytes[PREFIX..PREFIX + len])?;
    Ok(Decoded::Frame(message, &bytes[PREFIX + len..]))
}

fn decode_payload(payload: &[u8]) -> Result<Message, ProtocolError> {
    serde_json::from_slice(payload).map_err(|e| {
        let kind = match e.classify() {
            serde_json::error::Category::Data => ProtocolErrorKind::Schema,
            _ => ProtocolErrorKind::Malformed,
        };
        ProtocolError { kind, offset: PREFIX + payload_offset(payload, e.line(), e.column()), reason: e.to_string() }
    })
}

/// Convert serde_json's 1-based line/column into a byte offset within `payload`.
fn payload_offset(payload: &[u8], line: usize, column: usize) -> usize {
    let line_start = if line <= 1 {
        0
    } else {
        payload
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(line - 2)
            .map_or(payload.len(), |(i, _)| i + 1)
    };
    (line_start + column.saturating_sub(1)).min(payload.len())
}

/// Incremental decoder for one connection's byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    start: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start == self.buf.len() {
            self.buf.clear();
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet consumed by a complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Pop the next complete message, or `Ok(None)` if more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<Message>, ProtocolError> {
        let pending = &self.buf[self.start..];
        match decode_frame(pending) {
            Ok(Decoded::Frame(message, rest)) => {
                self.start += pending.len() - rest.len();
                if self.start > 4096 && self.start * 2 > self.buf.len() {
                    self.buf.drain(..self.start);
                    self.start = 0;
                }
                Ok(Some(message))
            }
            Ok(Decoded::NeedMore) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("connection closed mid-frame")]
    Truncated,
}

/// Read one raw frame (prefix included) from a blocking reader.
///
/// Returns `Ok(None)` on a clean end of stream at a frame boundary.
pub fn read_frame_bytes<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>, TransportError> {
    let mut prefix = [0u8; PREFIX];
    let mut filled = 0;
    while filled < PREFIX {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = declared_len(&prefix)?.expect("prefix is complete");
    let mut frame = vec![0u8; PREFIX + len];
    frame[..PREFIX].copy_from_slice(&prefix);
    reader.read_exact(&mut frame[PREFIX..]).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TransportError::Truncated,
        _ => TransportError::Io(e),
    })?;
    Ok(Some(frame))
}

/// Read and decode one message. `Ok(None)` means the peer closed cleanly.
pub fn read_message<R: Read>(reader: &mut R) -> Result<Option<Message>, TransportError> {
    let Some(frame) = read_frame_bytes(reader)? else {
        return Ok(None);
    };
    Ok(Some(decode_payload(&frame[PREFIX..])?))
}

pub fn write_message<W: Write>(writer: &mut W, message: &Message) -> Result<(), TransportError> {
    let frame = encode_frame(message)?;
    writer.write_all(&frame)?;
    writer.flush()?;
    Ok(())
}
