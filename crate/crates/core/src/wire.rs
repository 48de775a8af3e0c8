//! Length-prefixed binary framing between the actor and the learner.
//!
//! Frame layout: `length: u32 LE` (payload byte count), `msg_type: u8`,
//! then `length` payload bytes. Four message types:
//!
//! | type | name           | payload                                              |
//! |------|----------------|------------------------------------------------------|
//! | 1    | TRANSITION     | episode_id u32, then one transition in file layout   |
//! | 2    | EPISODE_END    | episode_id u32, success u8, success_frame i32 (−1 = none) |
//! | 3    | PARAM_SNAPSHOT | parameter-snapshot bytes, then snapshot_id u64        |
//! | 4    | HEARTBEAT      | empty                                                 |
//!
//! Parsing is structural and total: any malformed input is rejected with an
//! error naming where the damage is. A frame is only ever surfaced whole,
//! so a receiver can never observe half a message (snapshot installs are
//! atomic by construction).

use std::io::{Read, Write};

use thiserror::Error;

use crate::episodes::{Transition, TRANSITION_WIRE_LEN};

pub const FRAME_HEADER_LEN: usize = 5;
/// Upper bound on a payload; anything larger is treated as stream
/// corruption rather than an allocation request.
pub const MAX_FRAME_PAYLOAD: usize = 16 << 20;

pub const MSG_TRANSITION: u8 = 1;
pub const MSG_EPISODE_END: u8 = 2;
pub const MSG_PARAM_SNAPSHOT: u8 = 3;
pub const MSG_HEARTBEAT: u8 = 4;

const TRANSITION_PAYLOAD_LEN: usize = 4 + TRANSITION_WIRE_LEN;
const EPISODE_END_PAYLOAD_LEN: usize = 4 + 1 + 4;

#[derive(Error, Debug)]
pub enum WireError {
    #[error("incomplete frame header: have {have} of {FRAME_HEADER_LEN} bytes")]
    TruncatedHeader { have: usize },
    #[error("frame payload truncated at offset {available}: header declared {declared} bytes")]
    TruncatedPayload { declared: usize, available: usize },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("declared payload length {declared} exceeds maximum {MAX_FRAME_PAYLOAD}")]
    Oversized { declared: usize },
    #[error("malformed payload for message type {msg_type}: {detail}")]
    BadPayload { msg_type: u8, detail: String },
    #[error("wire io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Transition {
        episode_id: u32,
        transition: Transition,
    },
    EpisodeEnd {
        episode_id: u32,
        success: bool,
        success_frame: Option<u32>,
    },
    /// `params` carries parameter-snapshot bytes; the id lets the actor
    /// report which policy version produced a rollout.
    ParamSnapshot { snapshot_id: u64, params: Vec<u8> },
    Heartbeat,
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Transition { .. } => MSG_TRANSITION,
            Message::EpisodeEnd { .. } => MSG_EPISODE_END,
            Message::ParamSnapshot { .. } => MSG_PARAM_SNAPSHOT,
            Message::Heartbeat => MSG_HEARTBEAT,
        }
    }
}

pub fn serialize_frame(msg: &Message) -> Vec<u8> {
    let mut payload = Vec::new();
    match msg {
        Message::Transition {
            episode_id,
            transition,
        } => {
            payload.extend_from_slice(&episode_id.to_le_bytes());
            transition.write_to(&mut payload);
        }
        Message::EpisodeEnd {
            episode_id,
            success,
            success_frame,
        } => {
            payload.extend_from_slice(&episode_id.to_le_bytes());
            payload.push(u8::from(*success));
            let frame: i32 = match success_frame {
                Some(f) => *f as i32,
                None => -1,
            };
            payload.extend_from_slice(&frame.to_le_bytes());
        }
        Message::ParamSnapshot {
            snapshot_id,
            params,
        } => {
            payload.extend_from_slice(params);
            payload.extend_from_slice(&snapshot_id.to_le_bytes());
        }
        Message::Heartbeat => {}
    }
    let mut frame = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(msg.msg_type());
    frame.extend_from_slice(&payload);
    frame
}

fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Message, WireError> {
    let bad = |detail: String| WireError::BadPayload { msg_type, detail };
    match msg_type {
        MSG_TRANSITION => {
            if payload.len() != TRANSITION_PAYLOAD_LEN {
                return Err(bad(format!(
                    "expected {TRANSITION_PAYLOAD_LEN} bytes, got {}",
                    payload.len()
                )));
            }
            let episode_id = u32::from_le_bytes(payload[..4].try_into().expect("length checked"));
            let transition = Transition::read_from(&payload[4..])
                .map_err(|e| bad(format!("transition: {e}")))?;
            Ok(Message::Transition {
                episode_id,
                transition,
            })
        }
        MSG_EPISODE_END => {
            if payload.len() != EPISODE_END_PAYLOAD_LEN {
                return Err(bad(format!(
                    "expected {EPISODE_END_PAYLOAD_LEN} bytes, got {}",
                    payload.len()
                )));
            }
            let episode_id = u32::from_le_bytes(payload[..4].try_into().expect("length checked"));
            let success = match payload[4] {
                0 => false,
                1 => true,
                other => return Err(bad(format!("success flag must be 0 or 1, got {other}"))),
            };
            let raw = i32::from_le_bytes(payload[5..9].try_into().expect("length checked"));
            let success_frame = match raw {
                -1 => None,
                f if f >= 0 => Some(f as u32),
                f => return Err(bad(format!("success frame must be >= -1, got {f}"))),
            };
            if success && success_frame.is_none() {
                return Err(bad("success episode without a success frame".into()));
            }
            Ok(Message::EpisodeEnd {
                episode_id,
                success,
                success_frame,
            })
        }
        MSG_PARAM_SNAPSHOT => {
            if payload.len() <= 8 {
                return Err(bad(format!(
                    "snapshot payload needs parameter bytes plus an 8-byte id, got {} bytes",
                    payload.len()
                )));
            }
            let split = payload.len() - 8;
            let snapshot_id =
                u64::from_le_bytes(payload[split..].try_into().expect("length checked"));
            Ok(Message::ParamSnapshot {
                snapshot_id,
                params: payload[..split].to_vec(),
            })
        }
        MSG_HEARTBEAT => {
            if !payload.is_empty() {
                return Err(bad(format!(
                    "heartbeat carries no payload, got {} bytes",
                    payload.len()
                )));
            }
            Ok(Message::Heartbeat)
        }
        other => Err(WireError::UnknownType(other)),
    }
}

/// Decode one frame from the front of `bytes`. Returns the message and the
/// byte count consumed, so back-to-back frames parse by advancing a cursor.
pub fn parse_frame(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(WireError::TruncatedHeader { have: bytes.len() });
    }
    let declared = u32::from_le_bytes(bytes[..4].try_into().expect("length checked")) as usize;
    let msg_type = bytes[4];
    if declared > MAX_FRAME_PAYLOAD {
        return Err(WireError::Oversized { declared });
    }
    let available = bytes.len() - FRAME_HEADER_LEN;
    if available < declared {
        return Err(WireError::TruncatedPayload {
            declared,
            available,
        });
    }
    let payload = &bytes[FRAME_HEADER_LEN..FRAME_HEADER_LEN + declared];
    Ok((decode_payload(msg_type, payload)?, FRAME_HEADER_LEN + declared))
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    w.write_all(&serialize_frame(msg))?;
    Ok(())
}

/// Blocking read of exactly one frame.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    r.read_exact(&mut header)?;
    let declared = u32::from_le_bytes(header[..4].try_into().expect("length checked")) as usize;
    if declared > MAX_FRAME_PAYLOAD {
        return Err(WireError::Oversized { declared });
    }
    let mut payload = vec![0u8; declared];
    r.read_exact(&mut payload)?;
    decode_payload(header[4], &payload)
}

/// Incremental frame assembly for non-blocking byte streams: feed whatever
/// arrived, pull out complete frames. Bytes are buffered until a whole
/// frame is present, so short reads never desynchronize the stream.
#[derive(Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn new() -> Self {
        FrameReader::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// `Ok(None)` means a partial frame is waiting for more bytes. Errors
    /// poison the stream (framing is lost once a header lies).
    pub fn next_frame(&mut self) -> Result<Option<Message>, WireError> {
        if self.buf.len() < FRAME_HEADER_LEN {
            return Ok(None);
        }
        let declared =
            u32::from_le_bytes(self.buf[..4].try_into().expect("length checked")) as usize;
        if declared > MAX_FRAME_PAYLOAD {
            return Err(WireError::Oversized { declared });
        }
        if self.buf.len() < FRAME_HEADER_LEN + declared {
            return Ok(None);
        }
        match parse_frame(&self.buf) {
            Ok((msg, consumed)) => {
                self.buf.drain(..consumed);
                Ok(Some(msg))
            }
            Err(e) => {
                // the frame is complete but invalid: drop it so the caller
                // can keep reading the stream after reporting the error
                self.buf.drain(..FRAME_HEADER_LEN + declared);
                Err(e)
            }
        }
    }

    pub fn buffered_len(&self) -> usize {
        self.buf.len()
    }
}
