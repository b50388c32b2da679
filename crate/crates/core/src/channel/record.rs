//! Wire framing.
//!
//! ```text
//!  0      2   3    4    5          13         21         25
//!  | "KI" | v | ty | md | assoc_id | seq (BE) | len (BE) | payload | tag |
//! ```
//!
//! The header is 25 bytes; `len` is a 4-byte big-endian payload length and
//! the tag is 32 bytes for authenticated-only records and 16 for AEAD. There
//! is no separate reserved byte: the length's top byte is always zero under
//! the 1 MiB payload cap.

use std::fmt;
use std::io::Read;

use thiserror::Error;

use crate::association::{AssocId, Mode};

pub const MAGIC: [u8; 2] = [0x4B, 0x49];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 25;
pub const MAX_PAYLOAD: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgType {
    Hello = 0x01,
    HelloAck = 0x02,
    Data = 0x03,
    Close = 0x04,
    Alert = 0x05,
}

impl MsgType {
    pub fn from_wire(b: u8) -> Option<MsgType> {
        Some(match b {
            0x01 => MsgType::Hello,
            0x02 => MsgType::HelloAck,
            0x03 => MsgType::Data,
            0x04 => MsgType::Close,
            0x05 => MsgType::Alert,
            _ => return None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("frame error in `{field}`: {reason}")]
pub struct FrameError {
    pub field: &'static str,
    pub reason: String,
}

impl FrameError {
    fn new(field: &'static str, reason: impl fmt::Display) -> Self {
        Self {
            field,
            reason: reason.to_string(),
        }
    }
}

/// Parsed fixed-size record header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub msg_type: MsgType,
    pub mode: Mode,
    pub assoc_id: AssocId,
    pub seq: u64,
    pub payload_len: u32,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..2].copy_from_slice(&MAGIC);
        h[2] = VERSION;
        h[3] = self.msg_type as u8;
        h[4] = self.mode as u8;
        h[5..13].copy_from_slice(&self.assoc_id.0);
        h[13..21].copy_from_slice(&self.seq.to_be_bytes());
        h[21..25].copy_from_slice(&self.payload_len.to_be_bytes());
        h
    }

    /// Validates every header field, including the payload cap, so callers
    /// can reject hostile lengths before allocating.
    pub fn parse(bytes: &[u8]) -> Result<Header, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::new(
                "header",
                format!("need {HEADER_LEN} bytes, got {}", bytes.len()),
            ));
        }
        if bytes[..2] != MAGIC {
            return Err(FrameError::new("magic", format!("{:02x}{:02x}", bytes[0], bytes[1])));
        }
        if bytes[2] != VERSION {
            return Err(FrameError::new("version", format!("unsupported {:#04x}", bytes[2])));
        }
        let msg_type = MsgType::from_wire(bytes[3])
            .ok_or_else(|| FrameError::new("msg_type", format!("unknown {:#04x}", bytes[3])))?;
        let mode = Mode::from_wire(bytes[4])
            .ok_or_else(|| FrameError::new("mode", format!("unknown {:#04x}", bytes[4])))?;
        let assoc_id = AssocId(bytes[5..13].try_into().unwrap());
        let seq = u64::from_be_bytes(bytes[13..21].try_into().unwrap());
        let payload_len = u32::from_be_bytes(bytes[21..25].try_into().unwrap());
        if payload_len as usize > MAX_PAYLOAD {
            return Err(FrameError::new(
                "payload_len",
                format!("{payload_len} exceeds cap {MAX_PAYLOAD}"),
            ));
        }
        Ok(Header {
            msg_type,
            mode,
            assoc_id,
            seq,
            payload_len,
        })
    }

    /// Bytes following the header: payload plus tag.
    pub fn body_len(&self) -> usize {
        self.payload_len as usize + self.mode.tag_len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub msg_type: MsgType,
    pub mode: Mode,
    pub assoc_id: AssocId,
    pub seq: u64,
    pub payload: Vec<u8>,
    pub tag: Vec<u8>,
}

impl Record {
    pub fn header(&self) -> Result<Header, FrameError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::new(
                "payload_len",
                format!("{} exceeds cap {MAX_PAYLOAD}", self.payload.len()),
            ));
        }
        Ok(Header {
            msg_type: self.msg_type,
            mode: self.mode,
            assoc_id: self.assoc_id,
            seq: self.seq,
            payload_len: self.payload.len() as u32,
        })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + self.mode.tag_len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        let header = self.header()?;
        if self.tag.len() != self.mode.tag_len() {
            return Err(FrameError::new(
                "tag",
                format!("expected {} bytes, got {}", self.mode.tag_len(), self.tag.len()),
            ));
        }
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&header.to_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.tag);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Record, FrameError> {
        let header = Header::parse(bytes)?;
        let body = &bytes[HEADER_LEN..];
        let plen = header.payload_len as usize;
        let tag_len = header.mode.tag_len();
        if body.len() < plen {
            return Err(FrameError::new(
                "payload",
                format!("need {plen} bytes, got {}", body.len()),
            ));
        }
        if body.len() < plen + tag_len {
            return Err(FrameError::new(
                "tag",
                format!("need {tag_len} bytes, got {}", body.len() - plen),
            ));
        }
        if body.len() > plen + tag_len {
            return Err(FrameError::new(
                "length",
                format!("{} trailing bytes", body.len() - plen - tag_len),
            ));
        }
        Ok(Record {
            msg_type: header.msg_type,
            mode: header.mode,
            assoc_id: header.assoc_id,
            seq: header.seq,
            payload: body[..plen].to_vec(),
            tag: body[plen..].to_vec(),
        })
    }
}

/// Reads one self-delimiting record from a byte stream and returns its raw
/// bytes. `Ok(None)` on a clean end of stream before the first header byte.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>, ReadFrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(ReadFrameError::Io(std::io::ErrorKind::UnexpectedEof.into()));
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(ReadFrameError::Io(e)),
        }
    }
    let parsed = Header::parse(&header)?;
    let mut frame = vec![0u8; HEADER_LEN + parsed.body_len()];
    frame[..HEADER_LEN].copy_from_slice(&header);
    reader
        .read_exact(&mut frame[HEADER_LEN..])
        .map_err(ReadFrameError::Io)?;
    Ok(Some(frame))
}

#[derive(Debug, Error)]
pub enum ReadFrameError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("transport: {0}")]
    Io(std::io::Error),
}
