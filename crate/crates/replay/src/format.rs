//! On-disk log format: little-endian, length-prefixed, no compression.
//!
//! ```text
//! magic 44 54 50 4C ("DTPL") | version u16 | channel_count u16
//! per channel: id u16 | name_len u16 | name UTF-8
//! per record:  t u64 | channel u16 | direction u8 | payload_len u32 | payload
//! ```
//!
//! A record on the reserved channel `0xFFFF` marks a recording that was
//! aborted mid-write (partial file); nothing after it is read.

use dtp_core::time::Timestamp;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"DTPL";
pub const FORMAT_VERSION: u16 = 1;
/// Reserved channel id marking an aborted (partial) recording.
pub const PARTIAL_MARKER_CHANNEL: u16 = 0xFFFF;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:02X?}, expected 44 54 50 4C")]
    BadMagic([u8; 4]),
    #[error("unsupported log version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated while reading {what} at byte offset {offset}")]
    Truncated { offset: u64, what: &'static str },
    #[error("invalid direction byte {value} at byte offset {offset}")]
    BadDirection { offset: u64, value: u8 },
    #[error("record at byte offset {offset} uses unregistered channel {channel}")]
    UnknownChannel { offset: u64, channel: u16 },
    #[error("record time went backwards at byte offset {offset}: {prev} then {got}")]
    NonMonotonicTime { offset: u64, prev: u64, got: u64 },
    #[error("channel id {0} appears twice in the header")]
    DuplicateChannel(u16),
    #[error("channel name at byte offset {offset} is not valid UTF-8")]
    BadChannelName { offset: u64 },
    #[error("channel {0} is reserved and cannot be registered")]
    ReservedChannel(u16),
    #[error("append on unregistered channel {0}")]
    AppendUnknownChannel(u16),
    #[error("slice bounds reversed: {from} > {to}")]
    SliceBounds { from: Timestamp, to: Timestamp },
    #[error("writer already aborted: {0}")]
    Aborted(String),
}

/// Which side of a channel produced the bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Bytes traveling toward the device (driver → device).
    ToDevice = 0,
    /// Bytes produced by the device (device → driver).
    FromDevice = 1,
    /// A middleware envelope captured off the bus.
    Bus = 2,
}

impl Direction {
    pub fn from_u8(v: u8) -> Option<Direction> {
        match v {
            0 => Some(Direction::ToDevice),
            1 => Some(Direction::FromDevice),
            2 => Some(Direction::Bus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelDef {
    pub id: u16,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    /// Virtual-clock receive time.
    pub t: Timestamp,
    pub channel: u16,
    pub direction: Direction,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogHeader {
    pub channels: Vec<ChannelDef>,
}

impl LogHeader {
    pub fn new(channels: Vec<ChannelDef>) -> Result<Self, ReplayError> {
        let mut seen = std::collections::HashSet::new();
        for c in &channels {
            if c.id == PARTIAL_MARKER_CHANNEL {
                return Err(ReplayError::ReservedChannel(c.id));
            }
            if !seen.insert(c.id) {
                return Err(ReplayError::DuplicateChannel(c.id));
            }
        }
        Ok(LogHeader { channels })
    }

    pub fn has_channel(&self, id: u16) -> bool {
        self.channels.iter().any(|c| c.id == id)
    }

    pub fn channel_name(&self, id: u16) -> Option<&str> {
        self.channels
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.name.as_str())
    }
}

/// A fully parsed log: header, records in file order, and whether the file
/// ended with the aborted-recording marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFile {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    pub partial: bool,
}

impl LogFile {
    pub fn new(header: LogHeader) -> Self {
        LogFile {
            header,
            records: Vec::new(),
            partial: false,
        }
    }
}
