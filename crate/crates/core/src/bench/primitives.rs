use std::hint::black_box;
use std::str::FromStr;
use std::sync::Arc;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::Aes256Gcm;
use hmac::{Hmac, Mac};
use p256::ecdsa::signature::Signer;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{measure, BenchConfig, BenchError, BenchReport, CaseResult};
use crate::association::{AssocId, Association, Mode, ProvisionFile, Role};
use crate::channel::{seal_to_wire, MsgType};
use crate::idvv::{IdvvState, Root, Seed, LABEL_C2S};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    HashSha256,
    HmacSha256,
    AeadAes256Gcm,
    SignRsa2048,
    SignEcdsaP256,
    IdvvStep,
    IdvvSealAuthOnly,
}

impl Primitive {
    pub const ALL: [Primitive; 7] = [
        Primitive::HashSha256,
        Primitive::HmacSha256,
        Primitive::AeadAes256Gcm,
        Primitive::SignRsa2048,
        Primitive::SignEcdsaP256,
        Primitive::IdvvStep,
        Primitive::IdvvSealAuthOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::HashSha256 => "hash-sha256",
            Primitive::HmacSha256 => "hmac-sha256",
            Primitive::AeadAes256Gcm => "aead-aes256gcm",
            Primitive::SignRsa2048 => "sign-rsa2048",
            Primitive::SignEcdsaP256 => "sign-ecdsa-p256",
            Primitive::IdvvStep => "idvv-step",
            Primitive::IdvvSealAuthOnly => "idvv-seal-authonly",
        }
    }
}

impl FromStr for Primitive {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| BenchError::Parameter(format!("unknown primitive `{s}`")))
    }
}

fn counter_filled(size: usize) -> Vec<u8> {
    (0..size).map(|i| i as u8).collect()
}

/// Fixed 32-byte key with the operation counter in its first 8 bytes, so
/// symmetric primitives run under a fresh key per message.
fn per_message_key(i: u64) -> [u8; 32] {
    let mut key = [0x5c; 32];
    key[..8].copy_from_slice(&i.to_le_bytes());
    key
}

fn bench_association() -> Association {
    let file = ProvisionFile {
        assoc_id: AssocId(*b"benchid0"),
        role: Role::Initiator,
        mode: Mode::AuthOnly,
        seed: Seed::new([0x11; 32]),
        root: Root::new([0x22; 32]),
        resync_window: None,
    };
    Association::load(&file).expect("static provisioning")
}

/// Measures one primitive over every configured message size.
///
/// Symmetric primitives (HMAC, AEAD) perform one complete keyed operation
/// per call, key setup included, under a per-message key: that is how the
/// record layer uses them. Signatures use one long-term key generated from a
/// fixed seed.
pub fn bench_primitive(primitive: Primitive, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(0x6b697373);
    let mut cases = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        let msg = counter_filled(size);
        let m = match primitive {
            Primitive::HashSha256 => measure(cfg, |_| {
                black_box(Sha256::digest(black_box(&msg)));
            }),
            Primitive::HmacSha256 => measure(cfg, |i| {
                let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&per_message_key(i)).unwrap();
                mac.update(black_box(&msg));
                black_box(mac.finalize().into_bytes());
            }),
            Primitive::AeadAes256Gcm => {
                let mut buf = msg.clone();
                measure(cfg, |i| {
                    let cipher = Aes256Gcm::new_from_slice(&per_message_key(i)).unwrap();
                    let nonce = [(i & 0xff) as u8; 12];
                    buf.copy_from_slice(&msg);
                    let tag = cipher
                        .encrypt_in_place_detached(&nonce.into(), &[], black_box(&mut buf))
                        .unwrap();
                    black_box(tag);
                })
            }
            Primitive::SignRsa2048 => {
                let key = rsa::RsaPrivateKey::new(&mut rng, 2048)
                    .map_err(|e| BenchError::Parameter(format!("rsa key generation: {e}")))?;
                let signer = rsa::pkcs1v15::SigningKey::<Sha256>::new(key);
                measure(cfg, |_| {
                    black_box(signer.sign(black_box(&msg)));
                })
            }
            Primitive::SignEcdsaP256 => {
                let signer = p256::ecdsa::SigningKey::random(&mut rng);
                measure(cfg, |_| {
                    let sig: p256::ecdsa::Signature = signer.sign(black_box(&msg));
                    black_box(sig);
                })
            }
            Primitive::IdvvStep => {
                let seed = Arc::new(Seed::new([0x11; 32]));
                let mut chain = IdvvState::new(seed, &Root::new([0x22; 32]), LABEL_C2S).unwrap();
                measure(cfg, |_| {
                    black_box(chain.next().expect("chain far from exhaustion"));
                })
            }
            Primitive::IdvvSealAuthOnly => {
                let mut assoc = bench_association();
                measure(cfg, |_| {
                    black_box(seal_to_wire(&mut assoc, MsgType::Data, black_box(&msg)).unwrap());
                })
            }
        };
        cases.push(CaseResult::from_measurement(primitive.name(), size, &m));
    }
    Ok(BenchReport::new(cases))
}
