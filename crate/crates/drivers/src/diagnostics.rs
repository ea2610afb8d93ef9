//! Shared driver configuration and health counters.

use dtp_core::bus::{BusError, Publisher, Topic};
use dtp_core::time::Timestamp;
use dtp_transport::ConnectionString;
use thiserror::Error;

/// Payload kind for diagnostics envelopes; the hosting application must
/// register it on the bus before drivers publish.
pub const DIAGNOSTICS_KIND: &str = "driver-diagnostics.v1";

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("transport: {0}")]
    Transport(#[from] dtp_transport::TransportError),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("expected rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("resync limit must be at least 1")]
    BadResyncLimit,
}

/// How a driver connects and where it publishes.
#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub connection: ConnectionString,
    /// Nominal device emission rate; used for staleness and backoff timing.
    pub rate_hz: f64,
    /// Topic prefix, e.g. `sensors` → `sensors/gps/fix`.
    pub topic_prefix: String,
    /// Resyncs tolerated before `last_error` flags a degraded link.
    pub resync_limit: u64,
}

impl DriverConfig {
    pub fn new(connection: ConnectionString, rate_hz: f64, topic_prefix: &str) -> DriverConfig {
        DriverConfig {
            connection,
            rate_hz,
            topic_prefix: topic_prefix.to_string(),
            resync_limit: 64,
        }
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(DriverError::BadRate(self.rate_hz));
        }
        if self.resync_limit == 0 {
            return Err(DriverError::BadResyncLimit);
        }
        // Surface malformed prefixes at configuration time, not first publish.
        Topic::new(format!("{}/x", self.topic_prefix))?;
        Ok(())
    }

    pub fn period_ns(&self) -> u64 {
        (1e9 / self.rate_hz).round() as u64
    }

    pub fn topic(&self, suffix: &str) -> String {
        format!("{}/{}", self.topic_prefix, suffix)
    }
}

/// Counters every stream decoder keeps; drivers fold them into their
/// published diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamCounters {
    pub frames_ok: u64,
    pub frames_dropped: u64,
    pub resyncs: u64,
}

/// Monotone health counters for one driver.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DriverDiagnostics {
    /// Frames parsed, verified, and published.
    pub frames_ok: u64,
    /// Complete frames/lines rejected (checksum, CRC, or field errors).
    pub frames_dropped: u64,
    /// Contiguous runs of skipped bytes while hunting for a frame boundary.
    pub resyncs: u64,
    /// Successful link re-establishments.
    pub reconnects: u64,
    pub last_error: Option<String>,
}

impl DriverDiagnostics {
    /// Little-endian wire form: four u64 counters then a u16-length string.
    pub fn to_payload(&self) -> Vec<u8> {
        let msg = self.last_error.as_deref().unwrap_or("");
        let mut out = Vec::with_capacity(34 + msg.len());
        out.extend_from_slice(&self.frames_ok.to_le_bytes());
        out.extend_from_slice(&self.frames_dropped.to_le_bytes());
        out.extend_from_slice(&self.resyncs.to_le_bytes());
        out.extend_from_slice(&self.reconnects.to_le_bytes());
        out.extend_from_slice(&(msg.len() as u16).to_le_bytes());
        out.extend_from_slice(msg.as_bytes());
        out
    }

    pub fn from_payload(buf: &[u8]) -> Option<DriverDiagnostics> {
        if buf.len() < 34 {
            return None;
        }
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let msg_len = u16::from_le_bytes(buf[32..34].try_into().unwrap()) as usize;
        if buf.len() != 34 + msg_len {
            return None;
        }
        let msg = std::str::from_utf8(&buf[34..]).ok()?;
        Some(DriverDiagnostics {
            frames_ok: u64_at(0),
            frames_dropped: u64_at(8),
            resyncs: u64_at(16),
            reconnects: u64_at(24),
            last_error: (!msg.is_empty()).then(|| msg.to_string()),
        })
    }
}

/// Folds fresh decoder counters into the driver's diagnostics and publishes
/// an envelope whenever a *health* field changed (drops, resyncs,
/// reconnects, or the error string — not the steady tick of ok frames).
pub(crate) fn sync_and_publish(
    diagnostics: &mut DriverDiagnostics,
    counters: StreamCounters,
    resync_limit: u64,
    published: &mut DriverDiagnostics,
    diag_pub: &mut Publisher,
    now: Timestamp,
) -> Result<(), BusError> {
    diagnostics.frames_ok = counters.frames_ok;
    diagnostics.frames_dropped = counters.frames_dropped;
    diagnostics.resyncs = counters.resyncs;
    if diagnostics.resyncs > resync_limit && diagnostics.last_error.is_none() {
        diagnostics.last_error = Some(format!(
            "resync limit exceeded ({} > {resync_limit})",
            diagnostics.resyncs
        ));
    }
    let health_changed = diagnostics.frames_dropped != published.frames_dropped
        || diagnostics.resyncs != published.resyncs
        || diagnostics.reconnects != published.reconnects
        || diagnostics.last_error != published.last_error;
    if health_changed {
        diag_pub.publish_at(now, diagnostics.to_payload())?;
        *published = diagnostics.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let cs: ConnectionString = "mem://gps".parse().unwrap();
        let ok = DriverConfig::new(cs.clone(), 10.0, "sensors");
        ok.validate().unwrap();
        assert_eq!(ok.period_ns(), 100_000_000);
        assert_eq!(ok.topic("gps/fix"), "sensors/gps/fix");

        let mut bad = DriverConfig::new(cs.clone(), 0.0, "sensors");
        assert!(matches!(bad.validate(), Err(DriverError::BadRate(_))));
        bad.rate_hz = f64::NAN;
        assert!(matches!(bad.validate(), Err(DriverError::BadRate(_))));

        let mut bad = DriverConfig::new(cs.clone(), 10.0, "sensors");
        bad.resync_limit = 0;
        assert!(matches!(bad.validate(), Err(DriverError::BadResyncLimit)));

        let bad = DriverConfig::new(cs, 10.0, "no//good");
        assert!(matches!(bad.validate(), Err(DriverError::Bus(_))));
    }

    #[test]
    fn diagnostics_payload_round_trip() {
        let d = DriverDiagnostics {
            frames_ok: 10,
            frames_dropped: 2,
            resyncs: 1,
            reconnects: 3,
            last_error: Some("resync limit exceeded".into()),
        };
        assert_eq!(DriverDiagnostics::from_payload(&d.to_payload()), Some(d));
        let none = DriverDiagnostics::default();
        assert_eq!(
            DriverDiagnostics::from_payload(&none.to_payload()),
            Some(none)
        );
        assert_eq!(DriverDiagnostics::from_payload(&[0u8; 10]), None);
    }
}
