//! Time/channel slicing of parsed logs for curating recorded runs.

use std::collections::BTreeSet;

use dtp_core::time::Timestamp;

use crate::format::{LogFile, LogHeader, ReplayError};

/// Keeps records with `t ∈ [from, to)` on the selected channels and rewrites
/// the header to the surviving channel set. `None` keeps every channel.
pub fn log_slice(
    log: &LogFile,
    from: Timestamp,
    to: Timestamp,
    channels: Option<&BTreeSet<u16>>,
) -> Result<LogFile, ReplayError> {
    if from > to {
        return Err(ReplayError::SliceBounds { from, to });
    }
    let keep = |id: u16| channels.map(|set| set.contains(&id)).unwrap_or(true);
    let header = LogHeader {
        channels: log
            .header
            .channels
            .iter()
            .filter(|c| keep(c.id))
            .cloned()
            .collect(),
    };
    let records = log
        .records
        .iter()
        .filter(|r| r.t >= from && r.t < to && keep(r.channel))
        .cloned()
        .collect();
    Ok(LogFile {
        header,
        records,
        partial: log.partial,
    })
}
