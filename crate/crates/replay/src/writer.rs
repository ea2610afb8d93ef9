//! Streaming log writer plus the shared `Recorder` handle that tap
//! callbacks clone.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use dtp_core::time::Timestamp;

use crate::format::{
    ChannelDef, Direction, LogFile, LogHeader, ReplayError, FORMAT_VERSION, MAGIC,
    PARTIAL_MARKER_CHANNEL,
};

/// Appends records to a sink in timestamp order, enforcing the header
/// contract. On a sink failure it makes one attempt to append the
/// partial-file marker so readers can tell the file is incomplete.
pub struct LogWriter<W: Write> {
    out: W,
    header: LogHeader,
    last_t: Option<u64>,
    aborted: Option<String>,
}

/// Serializes the whole record and hands it to the sink in one write call,
/// so a failing sink cannot leave a torn record ahead of the abort marker.
fn write_record<W: Write>(
    out: &mut W,
    t: Timestamp,
    channel: u16,
    direction: Direction,
    payload: &[u8],
) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(15 + payload.len());
    buf.extend_from_slice(&t.0.to_le_bytes());
    buf.extend_from_slice(&channel.to_le_bytes());
    buf.push(direction as u8);
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(payload);
    out.write_all(&buf)
}

impl<W: Write> LogWriter<W> {
    /// Writes the header immediately.
    pub fn new(mut out: W, header: LogHeader) -> Result<Self, ReplayError> {
        out.write_all(&MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(header.channels.len() as u16).to_le_bytes())?;
        for c in &header.channels {
            out.write_all(&c.id.to_le_bytes())?;
            out.write_all(&(c.name.len() as u16).to_le_bytes())?;
            out.write_all(c.name.as_bytes())?;
        }
        Ok(LogWriter {
            out,
            header,
            last_t: None,
            aborted: None,
        })
    }

    pub fn append(
        &mut self,
        t: Timestamp,
        channel: u16,
        direction: Direction,
        payload: &[u8],
    ) -> Result<(), ReplayError> {
        if let Some(cause) = &self.aborted {
            return Err(ReplayError::Aborted(cause.clone()));
        }
        if !self.header.has_channel(channel) {
            return Err(ReplayError::AppendUnknownChannel(channel));
        }
        if let Some(prev) = self.last_t {
            if t.0 < prev {
                return Err(ReplayError::NonMonotonicTime {
                    offset: 0,
                    prev,
                    got: t.0,
                });
            }
        }
        match write_record(&mut self.out, t, channel, direction, payload) {
            Ok(()) => {
                self.last_t = Some(t.0);
                Ok(())
            }
            Err(e) => {
                // Abort: best-effort marker so the file is identifiably partial.
                let marker_t = Timestamp(self.last_t.unwrap_or(0));
                let _ = write_record(
                    &mut self.out,
                    marker_t,
                    PARTIAL_MARKER_CHANNEL,
                    Direction::Bus,
                    &[],
                );
                let _ = self.out.flush();
                self.aborted = Some(e.to_string());
                Err(ReplayError::Io(e))
            }
        }
    }

    pub fn finish(mut self) -> Result<(), ReplayError> {
        self.out.flush()?;
        Ok(())
    }

    /// Flushes and returns the sink (for in-memory sinks in tests/tools).
    pub fn into_inner(mut self) -> Result<W, ReplayError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: LogHeader) -> Result<Self, ReplayError> {
        let file = File::create(path)?;
        LogWriter::new(BufWriter::new(file), header)
    }
}

/// Writes a complete in-memory log; a partial log gets the marker appended.
pub fn write_log<W: Write>(out: W, log: &LogFile) -> Result<(), ReplayError> {
    let mut w = LogWriter::new(out, log.header.clone())?;
    for r in &log.records {
        w.append(r.t, r.channel, r.direction, &r.payload)?;
    }
    if log.partial {
        let t = Timestamp(w.last_t.unwrap_or(0));
        write_record(&mut w.out, t, PARTIAL_MARKER_CHANNEL, Direction::Bus, &[])?;
    }
    w.finish()
}

pub fn log_to_bytes(log: &LogFile) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log(&mut buf, log).expect("in-memory write cannot fail");
    buf
}

/// Cloneable recording handle: every tap (endpoint rx/tx, bus) funnels into
/// one ordered append queue behind a mutex. After a sink failure the
/// recorder goes quiet and reports the failure at `finish`.
#[derive(Clone)]
pub struct Recorder {
    inner: Arc<Mutex<RecorderInner>>,
}

struct RecorderInner {
    writer: Option<LogWriter<BufWriter<File>>>,
    failure: Option<String>,
    records_written: u64,
}

impl Recorder {
    pub fn create(path: &Path, channels: Vec<ChannelDef>) -> Result<Self, ReplayError> {
        let header = LogHeader::new(channels)?;
        let writer = LogWriter::create(path, header)?;
        Ok(Recorder {
            inner: Arc::new(Mutex::new(RecorderInner {
                writer: Some(writer),
                failure: None,
                records_written: 0,
            })),
        })
    }

    /// Appends one record; quietly drops records after a failure (the
    /// failure itself is reported once at `finish`).
    pub fn tap(&self, t: Timestamp, channel: u16, direction: Direction, payload: &[u8]) {
        let mut inner = self.inner.lock().unwrap();
        if inner.failure.is_some() {
            return;
        }
        let result = match inner.writer.as_mut() {
            Some(w) => w.append(t, channel, direction, payload),
            None => return,
        };
        match result {
            Ok(()) => inner.records_written += 1,
            Err(e) => {
                inner.failure = Some(e.to_string());
                inner.writer = None;
            }
        }
    }

    pub fn records_written(&self) -> u64 {
        self.inner.lock().unwrap().records_written
    }

    /// Flushes and closes; a recording that aborted mid-run surfaces here.
    pub fn finish(&self) -> Result<u64, ReplayError> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(cause) = inner.failure.take() {
            return Err(ReplayError::Aborted(cause));
        }
        if let Some(w) = inner.writer.take() {
            w.finish()?;
        }
        Ok(inner.records_written)
    }
}
