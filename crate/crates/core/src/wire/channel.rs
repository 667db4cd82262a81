//! A framed, transcript-keeping connection plus the hyperparameter handshake.

use std::io::{Read, Write};
use std::time::Instant;

use super::transcript::{Direction, Transcript};
use super::{Message, Tag, TrainConfig, WireError, MAX_FRAME_PAYLOAD, PROTOCOL_VERSION};

/// One reliable byte-stream connection carrying framed protocol messages.
/// Every frame is logged in the transcript with its exact size.
pub struct Channel<S> {
    stream: S,
    pub transcript: Transcript,
    started: Instant,
}

impl<S: Read + Write> Channel<S> {
    pub fn new(stream: S) -> Self {
        Channel {
            stream,
            transcript: Transcript::default(),
            started: Instant::now(),
        }
    }

    fn now_millis(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        let payload = msg.payload();
        let tag = msg.tag();
        self.stream
            .write_all(&(payload.len() as u64).to_le_bytes())?;
        self.stream.write_all(&[tag as u8])?;
        self.stream.write_all(&payload)?;
        self.stream.flush()?;
        let millis = self.now_millis();
        self.transcript
            .record(Direction::Sent, tag, 9 + payload.len() as u64, millis);
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, WireError> {
        let mut header = [0u8; 9];
        self.stream.read_exact(&mut header)?;
        let len = u64::from_le_bytes(header[..8].try_into().unwrap());
        if len > MAX_FRAME_PAYLOAD {
            return Err(WireError::OversizedFrame(len));
        }
        let tag = Tag::try_from(header[8])?;
        let mut payload = vec![0u8; len as usize];
        self.stream.read_exact(&mut payload)?;
        let msg = Message::decode(tag, &payload)?;
        let millis = self.now_millis();
        self.transcript
            .record(Direction::Received, tag, 9 + len, millis);
        Ok(msg)
    }

    /// Receive, requiring a tensor-bearing message of the given tag.
    pub fn recv_tensor(&mut self, expect: Tag) -> Result<crate::tensor::Tensor, WireError> {
        let msg = self.recv()?;
        let got = msg.tag();
        match (expect, msg) {
            (Tag::OutPlain, Message::OutPlain(t))
            | (Tag::ActPlain, Message::ActPlain(t))
            | (Tag::GradOut, Message::GradOut(t))
            | (Tag::GradW, Message::GradW(t))
            | (Tag::GradAct, Message::GradAct(t)) => Ok(t),
            _ => Err(WireError::UnexpectedMessage {
                expected: expect.name(),
                got,
            }),
        }
    }

    /// Client half of the handshake: HELLO exchange, then SYNC with the full
    /// config and a byte-exact echo-compare.
    pub fn synchronize_client(&mut self, cfg: &TrainConfig) -> Result<(), WireError> {
        self.send(&Message::Hello {
            version: PROTOCOL_VERSION,
        })?;
        match self.recv()? {
            Message::Hello { version } if version == PROTOCOL_VERSION => {}
            Message::Hello { version } => {
                return Err(WireError::Handshake(format!(
                    "peer protocol version {version}, expected {PROTOCOL_VERSION}"
                )))
            }
            other => {
                return Err(WireError::UnexpectedMessage {
                    expected: "HELLO",
                    got: other.tag(),
                })
            }
        }
        let sent = cfg.comparable();
        self.send(&Message::Sync(cfg.clone()))?;
        match self.recv()? {
            Message::Sync(echo) if echo.comparable() == sent => Ok(()),
            Message::Sync(_) => Err(WireError::Handshake(
                "server echoed a different configuration".into(),
            )),
            Message::Bye => Err(WireError::Handshake(
                "server rejected the configuration".into(),
            )),
            other => Err(WireError::UnexpectedMessage {
                expected: "SYNC",
                got: other.tag(),
            }),
        }
    }

    /// Server half: verify HELLO, receive the client's config, compare with
    /// our own, then echo the adopted config. The client's data-derived batch
    /// count is adopted when our config leaves it open.
    pub fn synchronize_server(&mut self, own: &TrainConfig) -> Result<TrainConfig, WireError> {
        match self.recv()? {
            Message::Hello { version } if version == PROTOCOL_VERSION => {}
            Message::Hello { version } => {
                return Err(WireError::Handshake(format!(
                    "peer protocol version {version}, expected {PROTOCOL_VERSION}"
                )))
            }
            other => {
                return Err(WireError::UnexpectedMessage {
                    expected: "HELLO",
                    got: other.tag(),
                })
            }
        }
        self.send(&Message::Hello {
            version: PROTOCOL_VERSION,
        })?;
        let theirs = match self.recv()? {
            Message::Sync(cfg) => cfg,
            other => {
                return Err(WireError::UnexpectedMessage {
                    expected: "SYNC",
                    got: other.tag(),
                })
            }
        };
        let mut adopted = own.clone();
        if adopted.batches_per_epoch.is_none() {
            adopted.batches_per_epoch = theirs.batches_per_epoch;
        }
        if adopted.comparable() != theirs.comparable() {
            let _ = self.send(&Message::Bye);
            return Err(WireError::Handshake(
                "client configuration does not match ours".into(),
            ));
        }
        self.send(&Message::Sync(adopted.clone()))?;
        Ok(adopted)
    }

    pub fn stream_mut(&mut self) -> &mut S {
        &mut self.stream
    }
}
