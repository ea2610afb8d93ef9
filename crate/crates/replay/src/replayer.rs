//! Timeline playback: hand back records as virtual time reaches them.

use std::time::Duration;

use dtp_core::time::Timestamp;

use crate::format::{LogFile, LogRecord};

/// Cursor over a parsed log. The caller advances its clock and drains the
/// records that have become due; records with equal timestamps come back in
/// file order.
pub struct Replayer {
    records: Vec<LogRecord>,
    cursor: usize,
}

impl Replayer {
    pub fn new(log: LogFile) -> Self {
        Replayer {
            records: log.records,
            cursor: 0,
        }
    }

    /// Timestamp of the next pending record.
    pub fn next_time(&self) -> Option<Timestamp> {
        self.records.get(self.cursor).map(|r| r.t)
    }

    /// Timestamp of the final record (end of the timeline).
    pub fn end_time(&self) -> Option<Timestamp> {
        self.records.last().map(|r| r.t)
    }

    pub fn finished(&self) -> bool {
        self.cursor >= self.records.len()
    }

    /// All records with `t ≤ now` that have not been emitted yet.
    pub fn due(&mut self, now: Timestamp) -> &[LogRecord] {
        let start = self.cursor;
        while self.cursor < self.records.len() && self.records[self.cursor].t <= now {
            self.cursor += 1;
        }
        &self.records[start..self.cursor]
    }
}

/// Wall-clock pause between two logged instants when replaying in realtime
/// at `speed` (logged interval divided by the factor). Virtual-clock replay
/// never calls this.
pub fn realtime_interval(prev: Timestamp, next: Timestamp, speed: f64) -> Duration {
    assert!(speed > 0.0, "speed factor must be positive");
    let logged = next.0.saturating_sub(prev.0) as f64;
    Duration::from_nanos((logged / speed).round() as u64)
}
