//! Provisioning and lifecycle of an endpoint pair's shared material.
//!
//! Key distribution is out-of-band: [`generate_provision`] produces a matched
//! pair of [`ProvisionFile`]s which are carried to the two endpoints and
//! turned into live [`Association`]s with [`Association::load`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::idvv::{IdvvError, IdvvState, Root, Seed, LABEL_C2S, LABEL_S2C, SECRET_LEN};

pub const DEFAULT_RESYNC_WINDOW: u32 = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProvisionError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("duplicate field `{0}`")]
    DuplicateField(&'static str),
    #[error("bad value for `{field}`: {reason}")]
    BadValue { field: &'static str, reason: String },
}

impl ProvisionError {
    /// Name of the offending field, when the error concerns one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ProvisionError::Syntax { .. } => None,
            ProvisionError::UnknownField(f) => Some(f),
            ProvisionError::MissingField(f)
            | ProvisionError::DuplicateField(f)
            | ProvisionError::BadValue { field: f, .. } => Some(f),
        }
    }
}

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error(transparent)]
    Provision(#[from] ProvisionError),
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Chain(#[from] IdvvError),
}

/// Why a sequence number was refused before any cryptographic check.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SeqError {
    #[error("replayed sequence {seq} (highest accepted {highest})")]
    Replay { seq: u64, highest: u64 },
    #[error("sequence gap {gap} exceeds resync window {window}")]
    OutOfWindow { gap: u64, window: u32 },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct AssocId(pub [u8; 8]);

impl fmt::Display for AssocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for AssocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AssocId({self})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Initiator => "initiator",
            Role::Responder => "responder",
        }
    }

    pub fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }

    /// Labels of the (send, receive) chains for this role.
    pub fn chain_labels(self) -> (&'static [u8], &'static [u8]) {
        match self {
            Role::Initiator => (LABEL_C2S, LABEL_S2C),
            Role::Responder => (LABEL_S2C, LABEL_C2S),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "initiator" => Ok(Role::Initiator),
            "responder" => Ok(Role::Responder),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Record protection mode. The discriminants are the wire mode byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AuthOnly = 0x01,
    Aead = 0x02,
}

impl Mode {
    /// Spelling used in provisioning files.
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::AuthOnly => "auth",
            Mode::Aead => "aead",
        }
    }

    pub fn from_wire(b: u8) -> Option<Mode> {
        match b {
            0x01 => Some(Mode::AuthOnly),
            0x02 => Some(Mode::Aead),
            _ => None,
        }
    }

    pub fn tag_len(self) -> usize {
        match self {
            Mode::AuthOnly => 32,
            Mode::Aead => 16,
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auth" => Ok(Mode::AuthOnly),
            "aead" => Ok(Mode::Aead),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Out-of-band provisioning document for one endpoint.
///
/// Canonical text form (LF line endings, lowercase hex):
///
/// ```text
/// assoc_id = 0123456789abcdef
/// role = initiator
/// mode = auth
/// seed = <64 hex>
/// root = <64 hex>
/// resync_window = 1024
/// ```
#[derive(Clone, PartialEq, Eq)]
pub struct ProvisionFile {
    pub assoc_id: AssocId,
    pub role: Role,
    pub mode: Mode,
    pub seed: Seed,
    pub root: Root,
    pub resync_window: Option<u32>,
}

impl fmt::Debug for ProvisionFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProvisionFile")
            .field("assoc_id", &self.assoc_id)
            .field("role", &self.role)
            .field("mode", &self.mode)
            .field("resync_window", &self.resync_window)
            .finish_non_exhaustive()
    }
}

const FIELDS: [&str; 6] = ["assoc_id", "role", "mode", "seed", "root", "resync_window"];

fn decode_hex<const N: usize>(field: &'static str, value: &str) -> Result<[u8; N], ProvisionError> {
    let bad = |reason: String| ProvisionError::BadValue { field, reason };
    if value.len() != 2 * N {
        return Err(bad(format!("expected {} hex chars, got {}", 2 * N, value.len())));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(value, &mut out).map_err(|e| bad(e.to_string()))?;
    Ok(out)
}

impl ProvisionFile {
    pub fn resync_window_or_default(&self) -> u32 {
        self.resync_window.unwrap_or(DEFAULT_RESYNC_WINDOW)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "assoc_id = {}\nrole = {}\nmode = {}\nseed = {}\nroot = {}\n",
            self.assoc_id,
            self.role.as_str(),
            self.mode.as_str(),
            hex::encode(self.seed.expose()),
            hex::encode(self.root.expose()),
        );
        if let Some(w) = self.resync_window {
            out.push_str(&format!("resync_window = {w}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProvisionError> {
        let mut values: [Option<&str>; 6] = [None; 6];
        for (idx, raw) in text.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ProvisionError::Syntax { line: idx + 1 })?;
            let key = key.trim();
            let slot = FIELDS
                .iter()
                .position(|f| *f == key)
                .ok_or_else(|| ProvisionError::UnknownField(key.to_string()))?;
            if values[slot].replace(value.trim()).is_some() {
                return Err(ProvisionError::DuplicateField(FIELDS[slot]));
            }
        }
        let required = |i: usize| values[i].ok_or(ProvisionError::MissingField(FIELDS[i]));

        let assoc_id = AssocId(decode_hex::<8>("assoc_id", required(0)?)?);
        let role = required(1)?
            .parse()
            .map_err(|reason| ProvisionError::BadValue { field: "role", reason })?;
        let mode = required(2)?
            .parse()
            .map_err(|reason| ProvisionError::BadValue { field: "mode", reason })?;
        let seed = Seed::new(decode_hex::<SECRET_LEN>("seed", required(3)?)?);
        let root = Root::new(decode_hex::<SECRET_LEN>("root", required(4)?)?);
        let resync_window = match values[5] {
            None => None,
            Some(v) => {
                let w: u32 = v.parse().map_err(|e: std::num::ParseIntError| {
                    ProvisionError::BadValue {
                        field: "resync_window",
                        reason: e.to_string(),
                    }
                })?;
                if w == 0 {
                    return Err(ProvisionError::BadValue {
                        field: "resync_window",
                        reason: "must be at least 1".into(),
                    });
                }
                Some(w)
            }
        };
        Ok(Self {
            assoc_id,
            role,
            mode,
            seed,
            root,
            resync_window,
        })
    }
}

/// Generates a matched (initiator, responder) provisioning pair.
pub fn generate_provision<R: RngCore + CryptoRng>(
    rng: &mut R,
    mode: Mode,
    resync_window: u32,
) -> Result<(ProvisionFile, ProvisionFile), AssociationError> {
    if resync_window == 0 {
        return Err(AssociationError::InvalidParameter("resync window must be at least 1".into()));
    }
    let mut fill = |buf: &mut [u8]| {
        rng.try_fill_bytes(buf)
            .map_err(|e| AssociationError::Entropy(e.to_string()))
    };
    let mut id = [0u8; 8];
    fill(&mut id)?;
    let mut seed = Seed::new([0; SECRET_LEN]);
    let mut root = Root::new([0; SECRET_LEN]);
    while seed.expose() == root.expose() {
        let mut s = [0u8; SECRET_LEN];
        let mut r = [0u8; SECRET_LEN];
        fill(&mut s)?;
        fill(&mut r)?;
        seed = Seed::new(s);
        root = Root::new(r);
    }
    let initiator = ProvisionFile {
        assoc_id: AssocId(id),
        role: Role::Initiator,
        mode,
        seed,
        root,
        resync_window: Some(resync_window),
    };
    let responder = ProvisionFile {
        role: Role::Responder,
        ..initiator.clone()
    };
    Ok((initiator, responder))
}

/// Live state of one endpoint of an association.
///
/// Single-owner: all mutation goes through `&mut self`.
#[derive(Debug)]
pub struct Association {
    id: AssocId,
    role: Role,
    mode: Mode,
    seed: Arc<Seed>,
    root: Root,
    pub(crate) send_chain: IdvvState,
    pub(crate) recv_chain: IdvvState,
    resync_window: u32,
    highest_accepted_seq: u64,
}

impl Association {
    pub fn load(file: &ProvisionFile) -> Result<Self, AssociationError> {
        let seed = Arc::new(file.seed.clone());
        let (send_label, recv_label) = file.role.chain_labels();
        let send_chain = IdvvState::new(seed.clone(), &file.root, send_label)?;
        let recv_chain = IdvvState::new(seed.clone(), &file.root, recv_label)?;
        Ok(Self {
            id: file.assoc_id,
            role: file.role,
            mode: file.mode,
            seed,
            root: file.root.clone(),
            send_chain,
            recv_chain,
            resync_window: file.resync_window_or_default(),
            highest_accepted_seq: 0,
        })
    }

    pub fn id(&self) -> AssocId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn resync_window(&self) -> u32 {
        self.resync_window
    }

    pub fn highest_accepted_seq(&self) -> u64 {
        self.highest_accepted_seq
    }

    pub fn send_chain(&self) -> &IdvvState {
        &self.send_chain
    }

    pub fn recv_chain(&self) -> &IdvvState {
        &self.recv_chain
    }

    pub fn seed(&self) -> &Arc<Seed> {
        &self.seed
    }

    pub fn root(&self) -> &Root {
        &self.root
    }

    /// Checks whether `seq` may be accepted and returns the gap to the highest
    /// accepted sequence. Nothing is committed here.
    pub fn accept_seq(&self, seq: u64) -> Result<u64, SeqError> {
        if seq <= self.highest_accepted_seq {
            return Err(SeqError::Replay {
                seq,
                highest: self.highest_accepted_seq,
            });
        }
        let gap = seq - self.highest_accepted_seq;
        if gap > u64::from(self.resync_window) {
            return Err(SeqError::OutOfWindow {
                gap,
                window: self.resync_window,
            });
        }
        Ok(gap)
    }

    /// Installs a receive chain that was advanced on a scratch copy and
    /// verified against a record with sequence `seq`.
    pub(crate) fn commit_recv(&mut self, advanced: IdvvState, seq: u64) {
        debug_assert_eq!(advanced.counter(), seq);
        debug_assert!(seq > self.highest_accepted_seq);
        self.recv_chain = advanced;
        self.highest_accepted_seq = seq;
    }
}
