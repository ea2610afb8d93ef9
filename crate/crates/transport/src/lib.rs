//! Duplex byte-stream endpoints behind a single connection-string API.
//!
//! A driver is configured with a string like `tcp://127.0.0.1:4040`,
//! `mem://gps`, or `pty:///tmp/ttyGPS0`, and never learns whether the far end
//! is real hardware, an emulator in another process, or an emulator in the
//! same address space. `mem` is the deterministic in-process rendezvous used
//! by CI; `tcp` models an Ethernet-attached sensor; `pty` creates a
//! serial-device-like node at the given filesystem path so a configuration
//! written for a real serial device works unchanged.
//!
//! Endpoints also carry the fault model: per-byte seeded corruption, fixed
//! added latency, total blackout, and scheduled disconnects, all shaped on
//! the transmit side at byte granularity.

mod endpoint;

pub use endpoint::{settle_pair, Endpoint, EndpointStats};

use std::str::FromStr;
use std::time::Duration;

use dtp_core::time::Timestamp;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("unknown scheme `{0}` (expected tcp, mem, or pty)")]
    UnknownScheme(String),
    #[error("invalid connection string `{0}`: {1}")]
    InvalidConnectionString(String, &'static str),
    #[error("address `{0}` is already in use")]
    BindConflict(String),
    #[error("connection refused at `{0}`")]
    ConnectionRefused(String),
    #[error("endpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corruption probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("drop_all and latency cannot be combined on one endpoint")]
    ConflictingFaults,
    #[error("peer did not settle within {0:?}")]
    SettleTimeout(Duration),
}

/// Transport schemes an endpoint can speak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Tcp,
    Mem,
    Pty,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Tcp => "tcp",
            Scheme::Mem => "mem",
            Scheme::Pty => "pty",
        })
    }
}

/// Parsed `scheme://address` endpoint designator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionString {
    pub scheme: Scheme,
    pub address: String,
}

impl FromStr for ConnectionString {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, TransportError> {
        let (scheme, address) = s.split_once("://").ok_or_else(|| {
            TransportError::InvalidConnectionString(s.to_string(), "missing `://`")
        })?;
        let scheme = match scheme {
            "tcp" => Scheme::Tcp,
            "mem" => Scheme::Mem,
            "pty" => Scheme::Pty,
            other => return Err(TransportError::UnknownScheme(other.to_string())),
        };
        if address.is_empty() {
            return Err(TransportError::InvalidConnectionString(
                s.to_string(),
                "empty address",
            ));
        }
        Ok(ConnectionString {
            scheme,
            address: address.to_string(),
        })
    }
}

impl std::fmt::Display for ConnectionString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}://{}", self.scheme, self.address)
    }
}

/// Which side of the rendezvous this endpoint is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Device side: binds/creates the address and waits for a peer.
    Listen,
    /// Driver side: attaches to an existing address.
    Connect,
}

/// Transmit-side traffic shaping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultSpec {
    /// Discard all subsequent bytes and disconnect in an orderly way.
    DropAll,
    /// Flip each transmitted byte with `probability`; sites and replacement
    /// values are a pure function of (seed, byte index).
    Corrupt { probability: f64, seed: u64 },
    /// Delay every transmitted byte by a fixed duration (virtual time).
    Latency { duration: Duration },
    /// Orderly disconnect once the clock reaches `at`.
    DisconnectAt { at: Timestamp },
}
