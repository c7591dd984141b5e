//! Length-prefixed binary framing.
//!
//! Frame layout, all fields big-endian:
//!
//! ```text
//! len: u32 | slot: u64 | sender: u32 | payload[len - 12]
//! ```
//!
//! `len` counts the body (the 12-byte fixed header plus the payload), not
//! the length prefix itself.

use std::io::{Read, Write};

use crate::protocol::WireMessage;
use crate::transport::TransportError;
use crate::NodeId;

/// Fixed body header: slot (8 bytes) + sender (4 bytes).
pub const FRAME_HEADER_LEN: usize = 12;

/// Encodes one message, length prefix included. The payload is checked
/// against `limit` before any bytes are produced.
pub fn encode_frame(msg: &WireMessage, limit: usize) -> Result<Vec<u8>, TransportError> {
    if msg.payload.len() > limit {
        return Err(TransportError::FrameTooLarge {
            actual: msg.payload.len(),
            limit,
        });
    }
    let body_len = FRAME_HEADER_LEN + msg.payload.len();
    let mut buf = Vec::with_capacity(4 + body_len);
    buf.extend_from_slice(&(body_len as u32).to_be_bytes());
    buf.extend_from_slice(&msg.slot.to_be_bytes());
    buf.extend_from_slice(&msg.sender.get().to_be_bytes());
    buf.extend_from_slice(&msg.payload);
    Ok(buf)
}

/// Decodes a frame body (the bytes after the length prefix).
pub fn decode_body(body: &[u8]) -> Result<WireMessage, TransportError> {
    if body.len() < FRAME_HEADER_LEN {
        return Err(TransportError::MalformedFrame("body shorter than header"));
    }
    let slot = u64::from_be_bytes(body[0..8].try_into().unwrap());
    let sender = u32::from_be_bytes(body[8..12].try_into().unwrap());
    if sender == 0 {
        return Err(TransportError::MalformedFrame("sender id zero"));
    }
    Ok(WireMessage {
        slot,
        sender: NodeId::new(sender),
        payload: body[FRAME_HEADER_LEN..].to_vec(),
    })
}

/// Writes one frame to a byte stream.
pub fn write_frame<W: Write>(
    w: &mut W,
    msg: &WireMessage,
    limit: usize,
) -> Result<(), std::io::Error> {
    let buf = encode_frame(msg, limit).map_err(std::io::Error::other)?;
    w.write_all(&buf)
}

/// Reads one frame from a byte stream. Returns `Ok(None)` on a clean EOF at
/// a frame boundary; EOF mid-frame is an error.
pub fn read_frame<R: Read>(
    r: &mut R,
    limit: usize,
) -> Result<Option<WireMessage>, std::io::Error> {
    let mut len_buf = [0u8; 4];
    if !read_exact_or_eof(r, &mut len_buf)? {
        return Ok(None);
    }
    let body_len = u32::from_be_bytes(len_buf) as usize;
    if body_len < FRAME_HEADER_LEN {
        return Err(std::io::Error::other(TransportError::MalformedFrame(
            "declared body shorter than header",
        )));
    }
    if body_len - FRAME_HEADER_LEN > limit {
        return Err(std::io::Error::other(TransportError::FrameTooLarge {
            actual: body_len - FRAME_HEADER_LEN,
            limit,
        }));
    }
    let mut body = vec![0u8; body_len];
    r.read_exact(&mut body)?;
    decode_body(&body).map(Some).map_err(std::io::Error::other)
}

/// Returns `Ok(false)` when EOF is hit before the first byte of `buf`.
fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, std::io::Error> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "eof inside frame",
                ))
            }
            n => filled += n,
        }
    }
    Ok(true)
}
