//! Log reading with byte-offset-bearing errors for every malformed case.

use std::io::Read;
use std::path::Path;

use dtp_core::time::Timestamp;

use crate::format::{
    ChannelDef, Direction, LogFile, LogHeader, LogRecord, ReplayError, FORMAT_VERSION, MAGIC,
    PARTIAL_MARKER_CHANNEL,
};

struct CountingReader<R: Read> {
    inner: R,
    pos: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, pos: 0 }
    }

    /// Reads exactly `buf.len()` bytes; `Ok(false)` means clean EOF at the
    /// very first byte (used to detect end-of-records).
    fn read_exact_or_eof(
        &mut self,
        buf: &mut [u8],
        what: &'static str,
        element_start: u64,
    ) -> Result<bool, ReplayError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    if filled == 0 {
                        return Ok(false);
                    }
                    return Err(ReplayError::Truncated {
                        offset: element_start,
                        what,
                    });
                }
                Ok(n) => {
                    filled += n;
                    self.pos += n as u64;
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(ReplayError::Io(e)),
            }
        }
        Ok(true)
    }

    fn read_required(
        &mut self,
        buf: &mut [u8],
        what: &'static str,
        element_start: u64,
    ) -> Result<(), ReplayError> {
        if self.read_exact_or_eof(buf, what, element_start)? {
            Ok(())
        } else {
            Err(ReplayError::Truncated {
                offset: element_start,
                what,
            })
        }
    }

    fn u16_le(&mut self, what: &'static str, start: u64) -> Result<u16, ReplayError> {
        let mut b = [0u8; 2];
        self.read_required(&mut b, what, start)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32_le(&mut self, what: &'static str, start: u64) -> Result<u32, ReplayError> {
        let mut b = [0u8; 4];
        self.read_required(&mut b, what, start)?;
        Ok(u32::from_le_bytes(b))
    }
}

/// Parses a complete log. Stops (without error) at the partial-file marker,
/// reporting `partial = true`.
pub fn read_log<R: Read>(reader: R) -> Result<LogFile, ReplayError> {
    let mut r = CountingReader::new(reader);
    let mut magic = [0u8; 4];
    r.read_required(&mut magic, "magic", 0)?;
    if magic != MAGIC {
        return Err(ReplayError::BadMagic(magic));
    }
    let version = r.u16_le("version", r.pos)?;
    if version != FORMAT_VERSION {
        return Err(ReplayError::UnsupportedVersion(version));
    }
    let channel_count = r.u16_le("channel count", r.pos)?;
    let mut channels = Vec::with_capacity(channel_count as usize);
    for _ in 0..channel_count {
        let entry_start = r.pos;
        let id = r.u16_le("channel id", entry_start)?;
        let name_len = r.u16_le("channel name length", entry_start)?;
        let mut name = vec![0u8; name_len as usize];
        r.read_required(&mut name, "channel name", entry_start)?;
        let name = String::from_utf8(name)
            .map_err(|_| ReplayError::BadChannelName { offset: entry_start })?;
        channels.push(ChannelDef { id, name });
    }
    let header = LogHeader::new(channels)?;
    let mut records = Vec::new();
    let mut partial = false;
    let mut last_t: Option<u64> = None;
    loop {
        let record_start = r.pos;
        let mut t_bytes = [0u8; 8];
        if !r.read_exact_or_eof(&mut t_bytes, "record time", record_start)? {
            break; // clean end of file
        }
        let t = u64::from_le_bytes(t_bytes);
        let channel = r.u16_le("record channel", record_start)?;
        let mut dir_byte = [0u8; 1];
        r.read_required(&mut dir_byte, "record direction", record_start)?;
        let direction = Direction::from_u8(dir_byte[0]).ok_or(ReplayError::BadDirection {
            offset: record_start,
            value: dir_byte[0],
        })?;
        let len = r.u32_le("payload length", record_start)?;
        let mut payload = vec![0u8; len as usize];
        r.read_required(&mut payload, "payload", record_start)?;
        if channel == PARTIAL_MARKER_CHANNEL {
            partial = true;
            break; // nothing after an abort marker is trusted
        }
        if !header.has_channel(channel) {
            return Err(ReplayError::UnknownChannel {
                offset: record_start,
                channel,
            });
        }
        if let Some(prev) = last_t {
            if t < prev {
                return Err(ReplayError::NonMonotonicTime {
                    offset: record_start,
                    prev,
                    got: t,
                });
            }
        }
        last_t = Some(t);
        records.push(LogRecord {
            t: Timestamp(t),
            channel,
            direction,
            payload,
        });
    }
    Ok(LogFile {
        header,
        records,
        partial,
    })
}

pub fn read_log_path(path: &Path) -> Result<LogFile, ReplayError> {
    let file = std::fs::File::open(path)?;
    read_log(std::io::BufReader::new(file))
}
