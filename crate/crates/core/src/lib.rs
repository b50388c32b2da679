//! Secure control-plane channel toolkit built around iDVV key chains.
//!
//! * [`idvv`]: the deterministic per-message key chain.
//! * [`association`]: out-of-band provisioning and anti-replay bookkeeping.
//! * [`channel`]: the record layer, seal/open and the endpoint state machine.
//! * [`randomness`]: a statistical battery run over chain output.
//! * [`bench`]: primitive and channel throughput measurements.

pub mod association;
pub mod bench;
pub mod channel;
pub mod idvv;
pub mod randomness;
