use std::io::{Read, Write};

use log::{debug, warn};
use rand::RngCore;

use super::record::{read_frame, ReadFrameError};
use super::{open, seal_to_wire, ChannelError, MsgType};
use crate::association::{Association, Role};

pub const HELLO_NONCE_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    New,
    Handshaking,
    Established,
    Closed,
}

/// What [`ChannelEndpoint::recv`] delivered.
#[derive(Debug, PartialEq, Eq)]
pub enum Incoming {
    Data(Vec<u8>),
    /// The peer closed the channel; the endpoint is now closed too.
    Closed,
}

/// One side of a channel over a reliable byte stream.
///
/// The endpoint owns its association and is driven from a single thread.
/// Any failure while receiving fails closed: a best-effort ALERT is sent and
/// the endpoint moves to [`ChannelState::Closed`].
pub struct ChannelEndpoint<T> {
    assoc: Association,
    transport: T,
    state: ChannelState,
}

impl<T: Read + Write> ChannelEndpoint<T> {
    pub fn new(assoc: Association, transport: T) -> Self {
        Self {
            assoc,
            transport,
            state: ChannelState::New,
        }
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    pub fn association(&self) -> &Association {
        &self.assoc
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn into_parts(self) -> (Association, T) {
        (self.assoc, self.transport)
    }

    fn write_record(&mut self, msg_type: MsgType, payload: &[u8]) -> Result<(), ChannelError> {
        let wire = seal_to_wire(&mut self.assoc, msg_type, payload)?;
        self.transport.write_all(&wire)?;
        self.transport.flush()?;
        Ok(())
    }

    fn read_record(&mut self) -> Result<(MsgType, Vec<u8>), ChannelError> {
        let frame = match read_frame(&mut self.transport) {
            Ok(Some(f)) => f,
            Ok(None) => {
                return Err(ChannelError::Transport(std::io::ErrorKind::UnexpectedEof.into()));
            }
            Err(ReadFrameError::Frame(e)) => return Err(e.into()),
            Err(ReadFrameError::Io(e)) => return Err(e.into()),
        };
        open(&mut self.assoc, &frame)
    }

    /// Sends the single wire-visible ALERT and closes. Failures are ignored.
    fn abort(&mut self, err: ChannelError) -> ChannelError {
        warn!("closing channel {}: {err}", self.assoc.id());
        if self.state != ChannelState::Closed {
            if let Err(e) = self.write_record(MsgType::Alert, &[]) {
                debug!("alert not delivered: {e}");
            }
            self.state = ChannelState::Closed;
        }
        err
    }

    /// Runs the HELLO / HELLO_ACK exchange for this endpoint's role.
    pub fn handshake(&mut self) -> Result<(), ChannelError> {
        if self.state != ChannelState::New {
            return Err(ChannelError::State {
                op: "handshake",
                state: self.state,
            });
        }
        self.state = ChannelState::Handshaking;
        let result = match self.assoc.role() {
            Role::Initiator => self.handshake_initiator(),
            Role::Responder => self.handshake_responder(),
        };
        match result {
            Ok(()) => {
                self.state = ChannelState::Established;
                debug!("channel {} established", self.assoc.id());
                Ok(())
            }
            Err(e) => Err(self.abort(e)),
        }
    }

    fn handshake_initiator(&mut self) -> Result<(), ChannelError> {
        let mut nonce = [0u8; HELLO_NONCE_LEN];
        rand::thread_rng().fill_bytes(&mut nonce);
        self.write_record(MsgType::Hello, &nonce)?;
        match self.read_record()? {
            (MsgType::HelloAck, echo) if echo == nonce => Ok(()),
            (MsgType::HelloAck, _) => Err(ChannelError::Handshake("HELLO_ACK echo mismatch".into())),
            (MsgType::Alert, _) => Err(ChannelError::PeerAlert),
            (other, _) => Err(ChannelError::Unexpected(other)),
        }
    }

    fn handshake_responder(&mut self) -> Result<(), ChannelError> {
        match self.read_record()? {
            (MsgType::Hello, nonce) if nonce.len() == HELLO_NONCE_LEN => {
                self.write_record(MsgType::HelloAck, &nonce)
            }
            (MsgType::Hello, nonce) => Err(ChannelError::Handshake(format!(
                "HELLO carries {} bytes, expected {HELLO_NONCE_LEN}",
                nonce.len()
            ))),
            (MsgType::Alert, _) => Err(ChannelError::PeerAlert),
            (other, _) => Err(ChannelError::Unexpected(other)),
        }
    }

    pub fn send(&mut self, payload: &[u8]) -> Result<(), ChannelError> {
        if self.state != ChannelState::Established {
            return Err(ChannelError::State {
                op: "send",
                state: self.state,
            });
        }
        self.write_record(MsgType::Data, payload)
    }

    pub fn recv(&mut self) -> Result<Incoming, ChannelError> {
        if self.state != ChannelState::Established {
            return Err(ChannelError::State {
                op: "recv",
                state: self.state,
            });
        }
        match self.read_record() {
            Ok((MsgType::Data, payload)) => Ok(Incoming::Data(payload)),
            Ok((MsgType::Close, _)) => {
                self.state = ChannelState::Closed;
                Ok(Incoming::Closed)
            }
            Ok((MsgType::Alert, _)) => {
                self.state = ChannelState::Closed;
                Err(ChannelError::PeerAlert)
            }
            Ok((other, _)) => Err(self.abort(ChannelError::Unexpected(other))),
            Err(e @ ChannelError::Transport(_)) => {
                self.state = ChannelState::Closed;
                Err(e)
            }
            Err(e) => Err(self.abort(e)),
        }
    }

    /// Sends CLOSE (best effort) and moves to the terminal state. Closing a
    /// closed endpoint is a no-op.
    pub fn close(&mut self) -> Result<(), ChannelError> {
        match self.state {
            ChannelState::Closed => Ok(()),
            ChannelState::Established => {
                if let Err(e) = self.write_record(MsgType::Close, &[]) {
                    debug!("close not delivered: {e}");
                }
                self.state = ChannelState::Closed;
                Ok(())
            }
            ChannelState::New | ChannelState::Handshaking => {
                self.state = ChannelState::Closed;
                Ok(())
            }
        }
    }
}
