//! iDVV key chains.
//!
//! A chain is bootstrapped from two independent 32-byte secrets (the seed and
//! the root) plus a direction label, and then stepped once per protected
//! message. Both endpoints of an association run the same chain locally, so a
//! per-message secret can be generated by the sender and regenerated by the
//! receiver without any key material crossing the wire.
//!
//! ```text
//! value_0     = HMAC-SHA-256(key = seed,    msg = root || label)
//! value_{i+1} = HMAC-SHA-256(key = value_i, msg = seed || be64(i))
//! ```
//!
//! The chain is one-way: the state only ever holds the latest value, and the
//! previous value is wiped as soon as its successor is computed.
//!
//! A state is single-owner. It is `Send` but stepping requires `&mut self`,
//! so concurrent stepping of one state cannot be expressed.

use std::fmt;
use std::sync::Arc;

use hmac::{Hmac, Mac};
use sha2::Sha256;
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

type HmacSha256 = Hmac<Sha256>;

/// Length of seeds, roots and chain values.
pub const SECRET_LEN: usize = 32;
/// Longest accepted direction label.
pub const MAX_LABEL_LEN: usize = 16;

/// Label of the initiator-to-responder chain.
pub const LABEL_C2S: &[u8] = b"c2s";
/// Label of the responder-to-initiator chain.
pub const LABEL_S2C: &[u8] = b"s2c";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdvvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("chain exhausted at counter {0}; association must be re-provisioned")]
    ChainExhausted(u64),
    #[error("counter gap {gap} exceeds window of {max_steps} steps")]
    OutOfWindow { gap: u64, max_steps: u32 },
    #[error("target counter {target} does not advance past current counter {current}")]
    Ordering { current: u64, target: u64 },
}

/// Keyed one-way compression used everywhere in the chain: HMAC-SHA-256 over
/// the concatenation of `parts`.
pub fn prf(key: &[u8], parts: &[&[u8]]) -> [u8; SECRET_LEN] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

macro_rules! secret_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
        pub struct $name([u8; SECRET_LEN]);

        impl $name {
            pub fn new(bytes: [u8; SECRET_LEN]) -> Self {
                Self(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, IdvvError> {
                let arr: [u8; SECRET_LEN] = bytes.try_into().map_err(|_| {
                    IdvvError::InvalidParameter(format!(
                        "{} must be {} bytes, got {}",
                        stringify!($name).to_lowercase(),
                        SECRET_LEN,
                        bytes.len()
                    ))
                })?;
                Ok(Self(arr))
            }

            pub fn expose(&self) -> &[u8; SECRET_LEN] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(concat!(stringify!($name), "(<redacted>)"))
            }
        }
    };
}

secret_type!(
    /// Long-term secret mixed into every chain step.
    Seed
);
secret_type!(
    /// Second bootstrap secret; only used to derive the initial chain value.
    Root
);

/// Output of a single chain step.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct IdvvValue {
    bytes: [u8; SECRET_LEN],
    #[zeroize(skip)]
    counter: u64,
}

impl IdvvValue {
    pub fn bytes(&self) -> &[u8; SECRET_LEN] {
        &self.bytes
    }

    /// Step index that produced this value (1 for the first step).
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Derives a labeled key from this value: the first `out_len` bytes of
    /// `PRF(value, label)`. Only the labels of [`KeyLabel`] are accepted.
    pub fn derive_key(&self, label: &[u8], out_len: usize) -> Result<Zeroizing<Vec<u8>>, IdvvError> {
        let label = KeyLabel::from_bytes(label)?;
        self.derive(label, out_len)
    }

    pub fn derive(&self, label: KeyLabel, out_len: usize) -> Result<Zeroizing<Vec<u8>>, IdvvError> {
        if out_len > SECRET_LEN {
            return Err(IdvvError::InvalidParameter(format!(
                "derived key length {out_len} exceeds {SECRET_LEN}"
            )));
        }
        let full = Zeroizing::new(prf(&self.bytes, &[label.as_bytes()]));
        Ok(Zeroizing::new(full[..out_len].to_vec()))
    }
}

impl fmt::Debug for IdvvValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdvvValue")
            .field("counter", &self.counter)
            .finish_non_exhaustive()
    }
}

/// Domain-separation labels for keys derived from a chain value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyLabel {
    Mac,
    Enc,
    Nonce,
}

impl KeyLabel {
    pub fn as_bytes(self) -> &'static [u8] {
        match self {
            KeyLabel::Mac => b"kiss-mac",
            KeyLabel::Enc => b"kiss-enc",
            KeyLabel::Nonce => b"kiss-nonce",
        }
    }

    pub fn from_bytes(label: &[u8]) -> Result<Self, IdvvError> {
        match label {
            b"kiss-mac" => Ok(KeyLabel::Mac),
            b"kiss-enc" => Ok(KeyLabel::Enc),
            b"kiss-nonce" => Ok(KeyLabel::Nonce),
            other => Err(IdvvError::InvalidParameter(format!(
                "unknown key label {:?}",
                String::from_utf8_lossy(other)
            ))),
        }
    }
}

fn check_label(label: &[u8]) -> Result<(), IdvvError> {
    if label.is_empty() || label.len() > MAX_LABEL_LEN {
        return Err(IdvvError::InvalidParameter(format!(
            "direction label must be 1..={MAX_LABEL_LEN} bytes, got {}",
            label.len()
        )));
    }
    Ok(())
}

/// One direction's position in the chain.
#[derive(Clone)]
pub struct IdvvState {
    seed: Arc<Seed>,
    value: [u8; SECRET_LEN],
    counter: u64,
    label: Vec<u8>,
}

impl IdvvState {
    pub fn new(seed: Arc<Seed>, root: &Root, direction_label: &[u8]) -> Result<Self, IdvvError> {
        check_label(direction_label)?;
        let value = prf(seed.expose(), &[root.expose(), direction_label]);
        Ok(Self {
            seed,
            value,
            counter: 0,
            label: direction_label.to_vec(),
        })
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn label(&self) -> &[u8] {
        &self.label
    }

    /// Current chain value. After `n` steps this is the value returned by the
    /// `n`-th call to [`IdvvState::next`].
    pub fn current(&self) -> &[u8; SECRET_LEN] {
        &self.value
    }

    /// Advances the chain by one step.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Result<IdvvValue, IdvvError> {
        if self.counter == u64::MAX {
            return Err(IdvvError::ChainExhausted(self.counter));
        }
        let mut next = prf(&self.value, &[self.seed.expose(), &self.counter.to_be_bytes()]);
        self.value.zeroize();
        self.value = next;
        next.zeroize();
        self.counter += 1;
        Ok(IdvvValue {
            bytes: self.value,
            counter: self.counter,
        })
    }

    /// Steps the chain until its counter equals `target_counter`.
    ///
    /// Nothing is mutated when the request is rejected.
    pub fn fast_forward(&mut self, target_counter: u64, max_steps: u32) -> Result<IdvvValue, IdvvError> {
        if target_counter <= self.counter {
            return Err(IdvvError::Ordering {
                current: self.counter,
                target: target_counter,
            });
        }
        let gap = target_counter - self.counter;
        if gap > u64::from(max_steps) {
            return Err(IdvvError::OutOfWindow { gap, max_steps });
        }
        for _ in 1..gap {
            self.next()?;
        }
        self.next()
    }

    /// Detaches the persistable part of the state (everything but the seed).
    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            label: self.label.clone(),
            counter: self.counter,
            value: self.value,
        }
    }
}

impl Drop for IdvvState {
    fn drop(&mut self) {
        self.value.zeroize();
    }
}

impl fmt::Debug for IdvvState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdvvState")
            .field("label", &String::from_utf8_lossy(&self.label))
            .field("counter", &self.counter)
            .finish_non_exhaustive()
    }
}

/// Persisted chain position: `be64(counter) || value || len(label) || label`.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct ChainSnapshot {
    label: Vec<u8>,
    #[zeroize(skip)]
    counter: u64,
    value: [u8; SECRET_LEN],
}

impl ChainSnapshot {
    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Vec::with_capacity(8 + SECRET_LEN + 1 + self.label.len());
        out.extend_from_slice(&self.counter.to_be_bytes());
        out.extend_from_slice(&self.value);
        out.push(self.label.len() as u8);
        out.extend_from_slice(&self.label);
        Zeroizing::new(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IdvvError> {
        let bad = |what: &str| IdvvError::InvalidParameter(format!("snapshot: {what}"));
        if bytes.len() < 8 + SECRET_LEN + 2 {
            return Err(bad("truncated"));
        }
        let counter = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let value: [u8; SECRET_LEN] = bytes[8..8 + SECRET_LEN].try_into().unwrap();
        let label_len = bytes[8 + SECRET_LEN] as usize;
        let label = &bytes[8 + SECRET_LEN + 1..];
        if label.len() != label_len {
            return Err(bad("label length mismatch"));
        }
        check_label(label)?;
        Ok(Self {
            label: label.to_vec(),
            counter,
            value,
        })
    }

    /// Re-attaches the seed and continues the chain where it left off.
    pub fn resume(&self, seed: Arc<Seed>) -> IdvvState {
        IdvvState {
            seed,
            value: self.value,
            counter: self.counter,
            label: self.label.clone(),
        }
    }
}
