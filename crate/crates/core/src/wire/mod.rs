//! Length-prefixed binary framing and the typed protocol messages exchanged
//! between client and server.
//!
//! A frame is `u64 LE payload length | type byte | payload`. All integers on
//! the wire are little-endian; all floats are IEEE-754 binary32, so identical
//! objects always serialize to identical bytes.

mod channel;
mod config;
pub mod mem;
mod transcript;

pub use channel::Channel;
pub use config::{HeConfig, Mode, TrainConfig};
pub use transcript::{Direction, Transcript, TranscriptEntry};

use thiserror::Error;

use crate::ckks::{
    deserialize_cipher_vector, deserialize_public_context, serialize_cipher_vector,
    serialize_public_context, CipherVector, HeError, PublicContext,
};
use crate::tensor::Tensor;

pub const PROTOCOL_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error("incomplete frame: wanted {wanted} more bytes")]
    IncompleteFrame { wanted: usize },
    #[error("unknown message tag 0x{0:02X}")]
    UnknownTag(u8),
    #[error("frame length {0} exceeds the permitted maximum")]
    OversizedFrame(u64),
    #[error("malformed {tag:?} payload: {msg}")]
    BadPayload { tag: Tag, msg: String },
    #[error("protocol violation: expected {expected}, got {got:?}")]
    UnexpectedMessage { expected: &'static str, got: Tag },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("config: {0}")]
    Config(String),
}

impl From<HeError> for WireError {
    fn from(e: HeError) -> Self {
        WireError::Config(e.to_string())
    }
}

/// One-byte message type tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Tag {
    Hello = 0x01,
    Sync = 0x02,
    CtxPub = 0x03,
    ActPlain = 0x04,
    ActEnc = 0x05,
    OutPlain = 0x06,
    OutEnc = 0x07,
    GradOut = 0x08,
    GradW = 0x09,
    GradAct = 0x0A,
    EpochEnd = 0x0B,
    Bye = 0x0C,
}

impl TryFrom<u8> for Tag {
    type Error = WireError;
    fn try_from(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0x01 => Tag::Hello,
            0x02 => Tag::Sync,
            0x03 => Tag::CtxPub,
            0x04 => Tag::ActPlain,
            0x05 => Tag::ActEnc,
            0x06 => Tag::OutPlain,
            0x07 => Tag::OutEnc,
            0x08 => Tag::GradOut,
            0x09 => Tag::GradW,
            0x0A => Tag::GradAct,
            0x0B => Tag::EpochEnd,
            0x0C => Tag::Bye,
            other => return Err(WireError::UnknownTag(other)),
        })
    }
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Hello => "HELLO",
            Tag::Sync => "SYNC",
            Tag::CtxPub => "CTX_PUB",
            Tag::ActPlain => "ACT_PLAIN",
            Tag::ActEnc => "ACT_ENC",
            Tag::OutPlain => "OUT_PLAIN",
            Tag::OutEnc => "OUT_ENC",
            Tag::GradOut => "GRAD_OUT",
            Tag::GradW => "GRAD_W",
            Tag::GradAct => "GRAD_ACT",
            Tag::EpochEnd => "EPOCH_END",
            Tag::Bye => "BYE",
        }
    }
}

/// A decoded protocol message.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Hello { version: u8 },
    Sync(TrainConfig),
    CtxPub(Box<PublicContext>),
    ActPlain(Tensor),
    ActEnc(CipherVector),
    OutPlain(Tensor),
    OutEnc(CipherVector),
    GradOut(Tensor),
    GradW(Tensor),
    GradAct(Tensor),
    EpochEnd { epoch: u32 },
    Bye,
}

impl Message {
    pub fn tag(&self) -> Tag {
        match self {
            Message::Hello { .. } => Tag::Hello,
            Message::Sync(_) => Tag::Sync,
            Message::CtxPub(_) => Tag::CtxPub,
            Message::ActPlain(_) => Tag::ActPlain,
            Message::ActEnc(_) => Tag::ActEnc,
            Message::OutPlain(_) => Tag::OutPlain,
            Message::OutEnc(_) => Tag::OutEnc,
            Message::GradOut(_) => Tag::GradOut,
            Message::GradW(_) => Tag::GradW,
            Message::GradAct(_) => Tag::GradAct,
            Message::EpochEnd { .. } => Tag::EpochEnd,
            Message::Bye => Tag::Bye,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match self {
            Message::Hello { version } => vec![*version],
            Message::Sync(cfg) => cfg.to_wire_bytes(),
            Message::CtxPub(ctx) => serialize_public_context(ctx),
            Message::ActPlain(t)
            | Message::OutPlain(t)
            | Message::GradOut(t)
            | Message::GradW(t)
            | Message::GradAct(t) => t.to_bytes(),
            Message::ActEnc(cv) | Message::OutEnc(cv) => serialize_cipher_vector(cv),
            Message::EpochEnd { epoch } => epoch.to_le_bytes().to_vec(),
            Message::Bye => Vec::new(),
        }
    }

    pub fn decode(tag: Tag, payload: &[u8]) -> Result<Message, WireError> {
        let bad = |msg: String| WireError::BadPayload { tag, msg };
        let tensor = |payload: &[u8]| -> Result<Tensor, WireError> {
            let (t, used) = Tensor::from_bytes(payload).map_err(|e| bad(e.to_string()))?;
            if used != payload.len() {
                return Err(bad("trailing bytes".into()));
            }
            Ok(t)
        };
        Ok(match tag {
            Tag::Hello => {
                if payload.len() != 1 {
                    return Err(bad("expected 1 byte".into()));
                }
                Message::Hello {
                    version: payload[0],
                }
            }
            Tag::Sync => Message::Sync(
                TrainConfig::from_wire_bytes(payload).map_err(|e| bad(e.to_string()))?,
            ),
            Tag::CtxPub => Message::CtxPub(Box::new(
                deserialize_public_context(payload).map_err(|e| bad(e.to_string()))?,
            )),
            Tag::ActPlain => Message::ActPlain(tensor(payload)?),
            Tag::OutPlain => Message::OutPlain(tensor(payload)?),
            Tag::GradOut => Message::GradOut(tensor(payload)?),
            Tag::GradW => Message::GradW(tensor(payload)?),
            Tag::GradAct => Message::GradAct(tensor(payload)?),
            Tag::ActEnc => {
                Message::ActEnc(deserialize_cipher_vector(payload).map_err(|e| bad(e.to_string()))?)
            }
            Tag::OutEnc => {
                Message::OutEnc(deserialize_cipher_vector(payload).map_err(|e| bad(e.to_string()))?)
            }
            Tag::EpochEnd => {
                if payload.len() != 4 {
                    return Err(bad("expected 4 bytes".into()));
                }
                Message::EpochEnd {
                    epoch: u32::from_le_bytes(payload.try_into().unwrap()),
                }
            }
            Tag::Bye => {
                if !payload.is_empty() {
                    return Err(bad("expected empty payload".into()));
                }
                Message::Bye
            }
        })
    }
}

/// Encode a frame: `u64 LE payload length | tag byte | payload`.
pub fn frame(tag: Tag, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + payload.len());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.push(tag as u8);
    out.extend_from_slice(payload);
    out
}

/// Decode one frame from a byte slice; returns the message and bytes used.
pub fn unframe(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    if bytes.len() < 9 {
        return Err(WireError::IncompleteFrame {
            wanted: 9 - bytes.len(),
        });
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    if len > MAX_FRAME_PAYLOAD {
        return Err(WireError::OversizedFrame(len));
    }
    let total = 9 + len as usize;
    if bytes.len() < total {
        return Err(WireError::IncompleteFrame {
            wanted: total - bytes.len(),
        });
    }
    let tag = Tag::try_from(bytes[8])?;
    let msg = Message::decode(tag, &bytes[9..total])?;
    Ok((msg, total))
}

/// Upper bound on a frame payload; generous for the largest cipher vectors.
pub const MAX_FRAME_PAYLOAD: u64 = 1 << 33;
