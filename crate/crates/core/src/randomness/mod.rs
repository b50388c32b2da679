//! Statistical battery over chain output.
//!
//! Seven frequency, run-structure and entropy tests in their standard
//! SP 800-22 form, plus a multi-stream battery that aggregates pass
//! proportions.

mod battery;
pub mod special;
mod nist;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::idvv::{IdvvError, IdvvState, Root, Seed};

pub use battery::{
    run_battery, run_battery_with, trial_label, BatteryConfig, RandomnessReport, TestSummary, TEST_NAMES,
};
pub use nist::{
    approximate_entropy_test, block_frequency_test, cusum_test, cusum_test_mode, longest_run_test,
    monobit_test, runs_test, serial_test, CusumMode,
};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const MIN_STREAM_BITS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomnessError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Chain(#[from] IdvvError),
}

/// A sequence of bits stored one per byte (0 or 1).
#[derive(Clone, PartialEq, Eq)]
pub struct BitStream {
    bits: Vec<u8>,
}

impl BitStream {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self, RandomnessError> {
        if bits.is_empty() {
            return Err(RandomnessError::Parameter("empty bit stream".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(RandomnessError::Parameter("bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    /// Parses a string of '0'/'1' characters; whitespace is ignored.
    pub fn from_str_bits(s: &str) -> Result<Self, RandomnessError> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(RandomnessError::Parameter(format!("not a bit: {other:?}"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Self::from_bits(bits)
    }

    /// Expands bytes most-significant bit first, truncated to `n_bits`.
    pub fn from_bytes_msb(bytes: &[u8], n_bits: usize) -> Result<Self, RandomnessError> {
        if n_bits > bytes.len() * 8 {
            return Err(RandomnessError::Parameter(format!(
                "{n_bits} bits requested from {} bytes",
                bytes.len()
            )));
        }
        let bits = bytes
            .iter()
            .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1))
            .take(n_bits)
            .collect();
        Self::from_bits(bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

impl fmt::Debug for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: String = self.bits.iter().take(32).map(|b| char::from(b'0' + b)).collect();
        write!(f, "BitStream(n={}, {preview}..)", self.bits.len())
    }
}

/// Draws `n_bits` from a chain, one 256-bit value per step.
pub fn stream_from_chain(chain: &mut IdvvState, n_bits: usize) -> Result<BitStream, RandomnessError> {
    if n_bits < MIN_STREAM_BITS {
        return Err(RandomnessError::Parameter(format!(
            "stream needs at least {MIN_STREAM_BITS} bits, got {n_bits}"
        )));
    }
    let steps = n_bits.div_ceil(256);
    let mut bytes = Vec::with_capacity(steps * 32);
    for _ in 0..steps {
        bytes.extend_from_slice(chain.next()?.bytes());
    }
    BitStream::from_bytes_msb(&bytes, n_bits)
}

/// Deterministic stream from a freshly initialized chain.
pub fn generate_stream(seed: &Seed, root: &Root, label: &[u8], n_bits: usize) -> Result<BitStream, RandomnessError> {
    let mut chain = IdvvState::new(Arc::new(seed.clone()), root, label)?;
    stream_from_chain(&mut chain, n_bits)
}

/// Outcome of one statistical test on one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test_name: &'static str,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
    /// False when a test's precondition on the input failed (the runs test's
    /// frequency prerequisite); such a result has p = 0 and fails.
    pub prerequisite_met: bool,
    pub params: Vec<(&'static str, f64)>,
}

impl TestResult {
    pub(crate) fn new(test_name: &'static str, p_value: f64, params: Vec<(&'static str, f64)>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            test_name,
            p_value,
            alpha: DEFAULT_ALPHA,
            pass: p_value >= DEFAULT_ALPHA,
            prerequisite_met: true,
            params,
        }
    }

    /// Re-judges the result at significance level `alpha`.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.pass = self.prerequisite_met && self.p_value >= alpha;
        self
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn msb_first_expansion() {
        let s = BitStream::from_bytes_msb(&[0b1000_0001, 0xff], 12).unwrap();
        assert_eq!(s.bits(), &[1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert!(BitStream::from_bytes_msb(&[0], 9).is_err());
        assert!(BitStream::from_bits(vec![0, 2]).is_err());
        assert!(BitStream::from_bits(vec![]).is_err());
    }

    #[test]
    fn stream_consumes_ceil_steps() {
        let seed = Arc::new(Seed::new([1; 32]));
        let root = Root::new([2; 32]);
        let mut chain = IdvvState::new(seed.clone(), &root, b"rnd").unwrap();
        stream_from_chain(&mut chain, 256).unwrap();
        assert_eq!(chain.counter(), 1);
        stream_from_chain(&mut chain, 257).unwrap();
        assert_eq!(chain.counter(), 3);
        assert!(stream_from_chain(&mut chain, 99).is_err());
    }

    #[test]
    fn generate_stream_is_deterministic() {
        let seed = Seed::new([1; 32]);
        let root = Root::new([2; 32]);
        let a = generate_stream(&seed, &root, b"rnd", 1000).unwrap();
        let b = generate_stream(&seed, &root, b"rnd", 1000).unwrap();
        let c = generate_stream(&seed, &root, b"rnd2", 1000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 1000);
    }

    #[test]
    fn alpha_rejudging() {
        let r = TestResult::new("x", 0.02, vec![]);
        assert!(r.pass);
        assert!(!r.clone().with_alpha(0.05).pass);
        assert_eq!(TestResult::new("x", 1.5, vec![]).p_value, 1.0);
    }
}
