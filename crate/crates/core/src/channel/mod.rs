//! The record layer: per-message keys from the iDVV chains, seal/open and
//! the connection state machine.
//!
//! Every record steps the sender's chain exactly once; the resulting value
//! keys the record's MAC (or AEAD cipher) and is never reused. The receiver
//! reproduces the value from its own copy of the chain, fast-forwarding over
//! lost records up to the association's resync window, and only commits the
//! advanced chain once the tag has verified.

mod endpoint;
pub mod record;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use hmac::{Hmac, Mac};
use sha2::Sha256;
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::association::{Association, Mode, SeqError};
use crate::idvv::{IdvvError, IdvvValue, KeyLabel};

pub use endpoint::{ChannelEndpoint, ChannelState, Incoming};
pub use record::{FrameError, Header, MsgType, Record, HEADER_LEN, MAX_PAYLOAD};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("association mismatch: {0}")]
    Association(String),
    #[error("replayed record: sequence {seq} not above {highest}")]
    Replay { seq: u64, highest: u64 },
    #[error("record outside resync window: gap {gap} > {window}")]
    OutOfWindow { gap: u64, window: u32 },
    #[error("record authentication failed")]
    Authentication,
    #[error("send chain exhausted; association must be re-provisioned")]
    ChainExhausted,
    #[error("operation `{op}` not allowed in state {state:?}")]
    State { op: &'static str, state: ChannelState },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("peer sent an alert")]
    PeerAlert,
    #[error("unexpected {0:?} record")]
    Unexpected(MsgType),
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
}

impl ChannelError {
    /// Stable short name of the error class, for operator output.
    pub fn class(&self) -> &'static str {
        match self {
            ChannelError::Frame(_) => "frame",
            ChannelError::Association(_) => "association",
            ChannelError::Replay { .. } => "replay",
            ChannelError::OutOfWindow { .. } => "out-of-window",
            ChannelError::Authentication => "authentication",
            ChannelError::ChainExhausted => "chain-exhausted",
            ChannelError::State { .. } => "state",
            ChannelError::Handshake(_) => "handshake",
            ChannelError::PeerAlert => "alert",
            ChannelError::Unexpected(_) => "protocol",
            ChannelError::Transport(_) => "transport",
        }
    }
}

impl From<SeqError> for ChannelError {
    fn from(e: SeqError) -> Self {
        match e {
            SeqError::Replay { seq, highest } => ChannelError::Replay { seq, highest },
            SeqError::OutOfWindow { gap, window } => ChannelError::OutOfWindow { gap, window },
        }
    }
}

impl From<IdvvError> for ChannelError {
    fn from(e: IdvvError) -> Self {
        match e {
            IdvvError::ChainExhausted(_) => ChannelError::ChainExhausted,
            IdvvError::OutOfWindow { gap, max_steps } => ChannelError::OutOfWindow {
                gap,
                window: max_steps,
            },
            IdvvError::Ordering { current, target } => ChannelError::Replay {
                seq: target,
                highest: current,
            },
            IdvvError::InvalidParameter(msg) => ChannelError::Association(msg),
        }
    }
}

type KeyBytes = zeroize::Zeroizing<Vec<u8>>;

/// Per-record key material derived from one chain value.
struct RecordKeys {
    mac: Option<KeyBytes>,
    /// AEAD key and nonce.
    enc: Option<(KeyBytes, KeyBytes)>,
}

impl RecordKeys {
    fn derive(value: &IdvvValue, mode: Mode) -> RecordKeys {
        // labels are fixed and lengths are within bounds
        let key = |label, len| value.derive(label, len).expect("static key parameters");
        match mode {
            Mode::AuthOnly => RecordKeys {
                mac: Some(key(KeyLabel::Mac, 32)),
                enc: None,
            },
            Mode::Aead => RecordKeys {
                mac: None,
                enc: Some((key(KeyLabel::Enc, 32), key(KeyLabel::Nonce, 12))),
            },
        }
    }
}

fn mac_tag(key: &[u8], header: &[u8], payload: &[u8]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(header);
    mac.update(payload);
    mac.finalize().into_bytes().into()
}

fn nonce_array(nonce: &[u8]) -> Nonce<aes_gcm::aead::consts::U12> {
    let arr: [u8; 12] = nonce.try_into().expect("nonce derived at 12 bytes");
    arr.into()
}

fn tag_array(tag: &[u8]) -> Result<Tag, ChannelError> {
    let arr: [u8; 16] = tag.try_into().map_err(|_| ChannelError::Authentication)?;
    Ok(arr.into())
}

/// Protects `payload` under the next value of the association's send chain.
pub fn seal(assoc: &mut Association, msg_type: MsgType, payload: &[u8]) -> Result<Record, ChannelError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError {
            field: "payload_len",
            reason: format!("{} exceeds cap {MAX_PAYLOAD}", payload.len()),
        }
        .into());
    }
    let value = assoc.send_chain.next()?;
    let mode = assoc.mode();
    let header = Header {
        msg_type,
        mode,
        assoc_id: assoc.id(),
        seq: value.counter(),
        payload_len: payload.len() as u32,
    };
    let header_bytes = header.to_bytes();
    let keys = RecordKeys::derive(&value, mode);
    let (body, tag) = match (&keys.mac, &keys.enc) {
        (Some(mac_key), _) => (payload.to_vec(), mac_tag(mac_key, &header_bytes, payload).to_vec()),
        (None, Some((enc_key, nonce))) => {
            let cipher = Aes256Gcm::new_from_slice(enc_key).expect("32-byte key");
            let mut body = payload.to_vec();
            let tag = cipher
                .encrypt_in_place_detached(&nonce_array(nonce), &header_bytes, &mut body)
                .expect("payload under AES-GCM length limit");
            (body, tag.to_vec())
        }
        (None, None) => unreachable!("every mode derives keys"),
    };
    Ok(Record {
        msg_type,
        mode,
        assoc_id: header.assoc_id,
        seq: header.seq,
        payload: body,
        tag,
    })
}

/// Seals and encodes in one step.
pub fn seal_to_wire(assoc: &mut Association, msg_type: MsgType, payload: &[u8]) -> Result<Vec<u8>, ChannelError> {
    Ok(seal(assoc, msg_type, payload)?.encode()?)
}

/// Verifies and unprotects a wire record.
///
/// The receive chain is advanced on a scratch copy; the association is only
/// updated once the record has authenticated, so forged or garbled records
/// cannot consume the resync window.
pub fn open(assoc: &mut Association, wire: &[u8]) -> Result<(MsgType, Vec<u8>), ChannelError> {
    let record = Record::decode(wire)?;
    if record.assoc_id != assoc.id() {
        return Err(ChannelError::Association(format!(
            "record for {} arrived on {}",
            record.assoc_id,
            assoc.id()
        )));
    }
    if record.mode != assoc.mode() {
        return Err(ChannelError::Association(format!(
            "record mode {:?} on a {:?} association",
            record.mode,
            assoc.mode()
        )));
    }
    assoc.accept_seq(record.seq)?;
    let mut scratch = assoc.recv_chain.clone();
    let value = scratch.fast_forward(record.seq, assoc.resync_window())?;
    let header_bytes = record.header()?.to_bytes();
    let keys = RecordKeys::derive(&value, record.mode);

    let plaintext = match (&keys.mac, &keys.enc) {
        (Some(mac_key), _) => {
            let expected = mac_tag(mac_key, &header_bytes, &record.payload);
            if !bool::from(expected.ct_eq(record.tag.as_slice())) {
                return Err(ChannelError::Authentication);
            }
            record.payload
        }
        (None, Some((enc_key, nonce))) => {
            let cipher = Aes256Gcm::new_from_slice(enc_key).expect("32-byte key");
            let mut body = record.payload;
            cipher
                .decrypt_in_place_detached(
                    &nonce_array(nonce),
                    &header_bytes,
                    &mut body,
                    &tag_array(&record.tag)?,
                )
                .map_err(|_| ChannelError::Authentication)?;
            body
        }
        (None, None) => unreachable!("every mode derives keys"),
    };
    assoc.commit_recv(scratch, record.seq);
    Ok((record.msg_type, plaintext))
}

/// Keys that protect the record sealed at chain position `seq` in the given
/// direction. Test-only view for checking per-message key freshness.
#[cfg(test)]
pub(crate) fn record_key_bytes(chain: &crate::idvv::IdvvState, seq: u64, mode: Mode) -> Vec<u8> {
    let mut c = chain.clone();
    let v = c.fast_forward(seq, u32::MAX).unwrap();
    let keys = RecordKeys::derive(&v, mode);
    match (keys.mac, keys.enc) {
        (Some(m), _) => m.to_vec(),
        (None, Some((k, n))) => [k.as_slice(), n.as_slice()].concat(),
        (None, None) => unreachable!(),
    }
}
