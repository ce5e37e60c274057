//! Frame codec: a 4-byte big-endian length prefix followed by the UTF-8 JSON
//! body of a [`Frame`].

use std::io::{ErrorKind, Read, Write};

use thiserror::Error;

use super::{Frame, ProtocolMessage};

/// Largest accepted frame body.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_BYTES}-byte limit")]
    Oversize(usize),
    #[error("truncated frame: needed {needed} bytes, got {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("connection closed")]
    Closed,
    #[error("transport i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub fn frame_encode(frame: &Frame) -> Result<Vec<u8>, CodecError> {
    let body = serde_json::to_vec(frame).map_err(|e| CodecError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(CodecError::Oversize(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decodes exactly one complete frame.
pub fn frame_decode(bytes: &[u8]) -> Result<Frame, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    let len = body_len(bytes[..4].try_into().expect("four bytes"))?;
    let body = &bytes[4..];
    if body.len() < len {
        return Err(CodecError::Truncated {
            needed: 4 + len,
            available: bytes.len(),
        });
    }
    if body.len() > len {
        return Err(CodecError::Malformed(format!(
            "{} trailing bytes after frame",
            body.len() - len
        )));
    }
    decode_body(body)
}

fn body_len(prefix: [u8; 4]) -> Result<usize, CodecError> {
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(CodecError::Oversize(len));
    }
    Ok(len)
}

fn decode_body(body: &[u8]) -> Result<Frame, CodecError> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| CodecError::Malformed(e.to_string()))?;
    match value.get("type").and_then(|t| t.as_str()) {
        Some(t) if ProtocolMessage::KINDS.contains(&t) => {}
        Some(t) => return Err(CodecError::UnknownType(t.to_owned())),
        None => return Err(CodecError::Malformed("missing `type` tag".into())),
    }
    serde_json::from_value(value).map_err(|e| CodecError::Malformed(e.to_string()))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), CodecError> {
    w.write_all(&frame_encode(frame)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean end of stream before the first prefix byte is
/// reported as [`CodecError::Closed`]; anywhere else as truncation.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, CodecError> {
    let mut prefix = [0u8; 4];
    let got = read_full(r, &mut prefix)?;
    if got == 0 {
        return Err(CodecError::Closed);
    }
    if got < 4 {
        return Err(CodecError::Truncated {
            needed: 4,
            available: got,
        });
    }
    let len = body_len(prefix)?;
    let mut body = vec![0u8; len];
    let got = read_full(r, &mut body)?;
    if got < len {
        return Err(CodecError::Truncated {
            needed: 4 + len,
            available: 4 + got,
        });
    }
    decode_body(&body)
}

/// Fills `buf` unless the stream ends first; returns the bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, std::io::Error> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
