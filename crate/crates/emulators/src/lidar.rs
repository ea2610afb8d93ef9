//! Binary LiDAR packet encoding and the text command vocabulary.
//!
//! Packet layout (little-endian):
//!
//! ```text
//! 4C 44 54 50 ("LDTP") | scan_id:u32 | t_ns:u64 | start_angle:i32 (µrad)
//! | incr:u32 (µrad) | count:u16 | count × u16 range (mm, 0 = no return)
//! | crc:u16 (CRC-16/CCITT-FALSE over scan_id..ranges)
//! ```

use dtp_core::measure::LidarScan;
use dtp_core::wire::crc16_ccitt_false;
use thiserror::Error;

pub const LIDAR_MAGIC: [u8; 4] = *b"LDTP";
/// Bytes before the ranges: magic + scan_id + t_ns + start + incr + count.
pub const LIDAR_HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 2;
pub const MAX_BEAMS: usize = 3600;

pub const CMD_START: &str = "START";
pub const CMD_STOP: &str = "STOP";
pub const CMD_INFO: &str = "INFO";
pub const INFO_RESPONSE: &str = "OK DTP-LIDAR-1 fw=1.0\n";
pub const ERR_RESPONSE: &str = "ERR unknown\n";

#[derive(Debug, Error, PartialEq)]
pub enum LidarEncodeError {
    #[error("beam count {0} outside [1, 3600]")]
    BeamCount(usize),
}

/// Encodes one scan packet.
pub fn encode_packet(scan: &LidarScan) -> Result<Vec<u8>, LidarEncodeError> {
    let n = scan.ranges_mm.len();
    if n == 0 || n > MAX_BEAMS {
        return Err(LidarEncodeError::BeamCount(n));
    }
    let mut out = Vec::with_capacity(LIDAR_HEADER_LEN + 2 * n + 2);
    out.extend_from_slice(&LIDAR_MAGIC);
    out.extend_from_slice(&scan.scan_id.to_le_bytes());
    out.extend_from_slice(&scan.time.0.to_le_bytes());
    out.extend_from_slice(&scan.start_angle_urad.to_le_bytes());
    out.extend_from_slice(&scan.angle_increment_urad.to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    for r in &scan.ranges_mm {
        out.extend_from_slice(&r.to_le_bytes());
    }
    let crc = crc16_ccitt_false(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Converts a meter range to the millimeter wire value: the no-hit sentinel
/// (anything beyond `max_range`) becomes 0 = no return; measurable ranges
/// round to the nearest millimeter with a floor of 1 mm so they can never
/// collide with the sentinel.
pub fn range_to_wire(meters: f64, max_range_m: f64) -> u16 {
    if !(meters.is_finite()) || meters > max_range_m {
        return 0;
    }
    let mm = (meters * 1000.0).round();
    if mm < 1.0 {
        1
    } else if mm > u16::MAX as f64 {
        0
    } else {
        mm as u16
    }
}
