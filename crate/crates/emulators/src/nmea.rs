//! NMEA-0183 sentence generation (GGA + RMC) from a `GpsFix`.
//!
//! Sentence shape:
//!
//! ```text
//! $GPGGA,hhmmss.ss,ddmm.mmmm,N|S,dddmm.mmmm,E|W,q,nn,h.h,a.a,M,0.0,M,,*CS\r\n
//! $GPRMC,hhmmss.ss,A|V,ddmm.mmmm,N|S,dddmm.mmmm,E|W,s.sss,c.cc,ddmmyy,,,A|N*CS\r\n
//! ```
//!
//! The checksum is the XOR of every byte strictly between `$` and `*`,
//! rendered as two uppercase hex digits. Times map the virtual clock onto a
//! fixed nominal UTC day (12:00:00.00 at virtual zero, date 150623) so runs
//! are reproducible byte for byte.

use dtp_core::measure::GpsFix;
use dtp_core::time::Timestamp;
use dtp_core::wire::nmea_checksum_hex;
use thiserror::Error;

/// Knots per meter-per-second: one knot is 1852 m per 3600 s.
pub const MPS_TO_KNOTS: f64 = 3600.0 / 1852.0;

/// Virtual zero renders as this many seconds into the nominal UTC day.
const TIME_BASE_S: u64 = 12 * 3600;
/// Fixed date field for RMC (ddmmyy).
const DATE_FIELD: &str = "150623";

#[derive(Debug, Error, PartialEq)]
pub enum NmeaEncodeError {
    #[error("latitude {0} out of range [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} out of range [-180, 180]")]
    Longitude(f64),
    #[error("field {0} is not finite")]
    NotFinite(&'static str),
}

/// `hhmmss.ss` rendering of a virtual timestamp (centisecond resolution,
/// wrapping at 24 h).
pub fn time_field(t: Timestamp) -> String {
    let total_cs = (t.0 + 5_000_000) / 10_000_000 + TIME_BASE_S * 100;
    let day_cs = total_cs % (24 * 3600 * 100);
    let cs = day_cs % 100;
    let s = (day_cs / 100) % 60;
    let m = (day_cs / 6000) % 60;
    let h = day_cs / 360_000;
    format!("{h:02}{m:02}{s:02}.{cs:02}")
}

/// `ddmm.mmmm,H` rendering of a latitude; carries 60.0000′ into the degrees.
pub fn lat_field(lat_deg: f64) -> Result<String, NmeaEncodeError> {
    if !lat_deg.is_finite() {
        return Err(NmeaEncodeError::NotFinite("latitude"));
    }
    if !(-90.0..=90.0).contains(&lat_deg) {
        return Err(NmeaEncodeError::Latitude(lat_deg));
    }
    let hemi = if lat_deg < 0.0 { 'S' } else { 'N' };
    let (d, minutes_e4) = split_degrees(lat_deg.abs());
    Ok(format!(
        "{d:02}{:02}.{:04},{hemi}",
        minutes_e4 / 10_000,
        minutes_e4 % 10_000
    ))
}

/// `dddmm.mmmm,H` rendering of a longitude.
pub fn lon_field(lon_deg: f64) -> Result<String, NmeaEncodeError> {
    if !lon_deg.is_finite() {
        return Err(NmeaEncodeError::NotFinite("longitude"));
    }
    if !(-180.0..=180.0).contains(&lon_deg) {
        return Err(NmeaEncodeError::Longitude(lon_deg));
    }
    let hemi = if lon_deg < 0.0 { 'W' } else { 'E' };
    let (d, minutes_e4) = split_degrees(lon_deg.abs());
    Ok(format!(
        "{d:03}{:02}.{:04},{hemi}",
        minutes_e4 / 10_000,
        minutes_e4 % 10_000
    ))
}

/// Whole degrees plus minutes in 1e-4 arcminute ticks, with the carry at
/// exactly 60.0000′ folded into the degrees.
fn split_degrees(abs_deg: f64) -> (u32, u32) {
    let mut d = abs_deg.floor() as u32;
    let mut minutes_e4 = ((abs_deg - d as f64) * 60.0 * 10_000.0).round() as u32;
    if minutes_e4 >= 600_000 {
        d += 1;
        minutes_e4 -= 600_000;
    }
    (d, minutes_e4)
}

/// Wraps a sentence body into `$body*CS\r\n`.
pub fn frame_sentence(body: &str) -> String {
    format!("${body}*{}\r\n", nmea_checksum_hex(body.as_bytes()))
}

fn validate(fix: &GpsFix) -> Result<(), NmeaEncodeError> {
    for (name, v) in [
        ("altitude", fix.position.altitude_m),
        ("hdop", fix.hdop),
        ("speed", fix.speed_mps),
        ("course", fix.course_deg),
    ] {
        if !v.is_finite() {
            return Err(NmeaEncodeError::NotFinite(name));
        }
    }
    Ok(())
}

/// GGA: fix position, quality, satellite count, HDOP, altitude.
pub fn format_gga(fix: &GpsFix) -> Result<String, NmeaEncodeError> {
    validate(fix)?;
    let body = format!(
        "GPGGA,{},{},{},{},{:02},{:.1},{:.3},M,0.0,M,,",
        time_field(fix.time),
        lat_field(fix.position.latitude_deg)?,
        lon_field(fix.position.longitude_deg)?,
        fix.quality,
        fix.satellites,
        fix.hdop,
        fix.position.altitude_m,
    );
    Ok(frame_sentence(&body))
}

/// RMC: status, position, speed over ground (knots), course, date.
pub fn format_rmc(fix: &GpsFix) -> Result<String, NmeaEncodeError> {
    validate(fix)?;
    let (status, mode) = if fix.quality >= 1 { ('A', 'A') } else { ('V', 'N') };
    let body = format!(
        "GPRMC,{},{status},{},{},{:.3},{:.2},{DATE_FIELD},,,{mode}",
        time_field(fix.time),
        lat_field(fix.position.latitude_deg)?,
        lon_field(fix.position.longitude_deg)?,
        fix.speed_mps * MPS_TO_KNOTS,
        fix.course_deg,
    );
    Ok(frame_sentence(&body))
}

/// Both sentences for one fix, GGA first, as the device emits them.
pub fn encode_fix(fix: &GpsFix) -> Result<String, NmeaEncodeError> {
    Ok(format!("{}{}", format_gga(fix)?, format_rmc(fix)?))
}
