//! NMEA-0183 GPS driver: splits the byte stream into lines, verifies
//! checksums, merges each GGA/RMC pair into one fix, and publishes it.

use crate::diagnostics::{
    sync_and_publish, DriverConfig, DriverDiagnostics, DriverError, StreamCounters,
    DIAGNOSTICS_KIND,
};
use dtp_core::bus::{Bus, Publisher};
use dtp_core::geo::GeoCoordinate;
use dtp_core::measure::{kind, GpsFix};
use dtp_core::time::{Timestamp, VirtualClock};
use dtp_transport::{Endpoint, Role};

/// Meters-per-second per knot: one knot is 1852 m per 3600 s.
pub const KNOTS_TO_MPS: f64 = 1852.0 / 3600.0;

/// Garbage guard: a line longer than any real sentence is discarded whole.
pub const MAX_LINE_LEN: usize = 1024;

/// Seconds into the nominal UTC day that correspond to virtual time zero.
const TIME_BASE_S: u64 = 12 * 3600;

/// Position/quality half of an epoch, from GGA.
#[derive(Debug, Clone)]
struct GgaData {
    time_str: String,
    time: Timestamp,
    position: GeoCoordinate,
    quality: u8,
    satellites: u8,
    hdop: f64,
}

/// Motion half of an epoch, from RMC.
#[derive(Debug, Clone)]
struct RmcData {
    time_str: String,
    speed_mps: f64,
    course_deg: f64,
}

enum Sentence {
    Gga(GgaData),
    Rmc(RmcData),
    /// Valid checksum, but a talker/type this driver does not consume.
    Other,
    /// Malformed: framing, checksum, or field parse failure.
    Bad,
}

/// Byte-stream → fix state machine. Pure: output depends only on the bytes
/// fed in, never on wall time, so live and replayed streams parse alike.
#[derive(Debug, Default)]
pub struct NmeaParser {
    line: Vec<u8>,
    pending: Option<GgaData>,
    counters: StreamCounters,
}

impl NmeaParser {
    pub fn new() -> NmeaParser {
        NmeaParser::default()
    }

    pub fn counters(&self) -> StreamCounters {
        self.counters
    }

    /// Feeds raw bytes; returns every fix completed by them. A trailing
    /// partial line is held, not judged, until its newline arrives.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<GpsFix> {
        let mut fixes = Vec::new();
        for &b in bytes {
            if b == b'\n' {
                let line = std::mem::take(&mut self.line);
                self.consume_line(&line, &mut fixes);
            } else {
                if self.line.len() >= MAX_LINE_LEN {
                    self.line.clear();
                    self.counters.frames_dropped += 1;
                }
                self.line.push(b);
            }
        }
        fixes
    }

    fn consume_line(&mut self, line: &[u8], out: &mut Vec<GpsFix>) {
        match classify(line) {
            Sentence::Gga(gga) => {
                self.counters.frames_ok += 1;
                // A fresh GGA opens a new epoch; an unconsumed predecessor
                // means its RMC was lost, and that epoch dies with it.
                self.pending = Some(gga);
            }
            Sentence::Rmc(rmc) => {
                self.counters.frames_ok += 1;
                if let Some(gga) = self.pending.take() {
                    if gga.time_str == rmc.time_str {
                        out.push(GpsFix {
                            time: gga.time,
                            position: gga.position,
                            quality: gga.quality,
                            satellites: gga.satellites,
                            hdop: gga.hdop,
                            speed_mps: rmc.speed_mps,
                            course_deg: rmc.course_deg,
                        });
                    }
                }
            }
            Sentence::Other => self.counters.frames_ok += 1,
            Sentence::Bad => self.counters.frames_dropped += 1,
        }
    }
}

/// Validates framing and checksum, then dispatches on the sentence type.
fn classify(line: &[u8]) -> Sentence {
    // Expect `$<body>*HH\r` — the `\n` was the split point.
    if line.len() < 5 || line[0] != b'$' || *line.last().unwrap() != b'\r' {
        return Sentence::Bad;
    }
    let line = &line[..line.len() - 1];
    let star = line.len() - 3;
    if line[star] != b'*' {
        return Sentence::Bad;
    }
    let body = &line[1..star];
    let hex = &line[star + 1..];
    if body.is_empty() || !hex.iter().all(u8::is_ascii_hexdigit) {
        return Sentence::Bad;
    }
    let want = dtp_core::wire::nmea_checksum_hex(body);
    if !want.as_bytes().eq_ignore_ascii_case(hex) {
        return Sentence::Bad;
    }
    let Ok(body) = std::str::from_utf8(body) else {
        return Sentence::Bad;
    };
    let fields: Vec<&str> = body.split(',').collect();
    match fields[0] {
        "GPGGA" => parse_gga(&fields).map_or(Sentence::Bad, Sentence::Gga),
        "GPRMC" => parse_rmc(&fields).map_or(Sentence::Bad, Sentence::Rmc),
        _ => Sentence::Other,
    }
}

/// `hhmmss.ss` → virtual timestamp, inverting the device's noon epoch.
fn parse_time(s: &str) -> Option<Timestamp> {
    let (whole, frac) = s.split_once('.')?;
    if whole.len() != 6 || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let h: u64 = whole[0..2].parse().ok()?;
    let m: u64 = whole[2..4].parse().ok()?;
    let sec: u64 = whole[4..6].parse().ok()?;
    if h >= 24 || m >= 60 || sec >= 60 {
        return None;
    }
    let mut frac_ns = 0u64;
    for (i, b) in frac.bytes().enumerate() {
        frac_ns += u64::from(b - b'0') * 10u64.pow(8 - i as u32);
    }
    let day_s = h * 3600 + m * 60 + sec;
    // Wrap once around midnight so short runs that cross it stay monotone.
    let rel_s = (day_s + 86_400 - TIME_BASE_S) % 86_400;
    Some(Timestamp(rel_s * 1_000_000_000 + frac_ns))
}

/// `ddmm.mmmm` + hemisphere → signed degrees. `deg_digits` is 2 for
/// latitude, 3 for longitude.
fn parse_angle(s: &str, hemi: &str, deg_digits: usize, neg: char) -> Option<f64> {
    if s.len() < deg_digits + 2 || !s.is_char_boundary(deg_digits) {
        return None;
    }
    let deg: f64 = s[..deg_digits].parse().ok()?;
    let minutes: f64 = s[deg_digits..].parse().ok()?;
    if !minutes.is_finite() || !(0.0..60.0).contains(&minutes) {
        return None;
    }
    let value = deg + minutes / 60.0;
    match hemi {
        h if h.len() == 1 && h.chars().next() == Some(neg) => Some(-value),
        "N" | "E" => Some(value),
        _ => None,
    }
}

fn parse_finite(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_gga(fields: &[&str]) -> Option<GgaData> {
    if fields.len() < 10 {
        return None;
    }
    let time = parse_time(fields[1])?;
    let lat = parse_angle(fields[2], fields[3], 2, 'S')?;
    let lon = parse_angle(fields[4], fields[5], 3, 'W')?;
    let quality: u8 = fields[6].parse().ok()?;
    if quality > 1 {
        return None;
    }
    let satellites: u8 = fields[7].parse().ok()?;
    let hdop = parse_finite(fields[8])?;
    if quality == 1 && !(hdop > 0.0) {
        return None;
    }
    let altitude = parse_finite(fields[9])?;
    let position = GeoCoordinate::new(lat, lon, altitude).ok()?;
    Some(GgaData {
        time_str: fields[1].to_string(),
        time,
        position,
        quality,
        satellites,
        hdop,
    })
}

fn parse_rmc(fields: &[&str]) -> Option<RmcData> {
    if fields.len() < 10 {
        return None;
    }
    parse_time(fields[1])?;
    if !matches!(fields[2], "A" | "V") {
        return None;
    }
    parse_angle(fields[3], fields[4], 2, 'S')?;
    parse_angle(fields[5], fields[6], 3, 'W')?;
    let knots = parse_finite(fields[7])?;
    if knots < 0.0 {
        return None;
    }
    let course = parse_finite(fields[8])?;
    if !(0.0..360.0).contains(&course) {
        return None;
    }
    Some(RmcData {
        time_str: fields[1].to_string(),
        speed_mps: knots * KNOTS_TO_MPS,
        course_deg: course,
    })
}

/// Owns one endpoint + parser and publishes fixes on `<prefix>/gps/fix`.
pub struct GpsDriver {
    endpoint: Endpoint,
    parser: NmeaParser,
    fix_pub: Publisher,
    diag_pub: Publisher,
    resync_limit: u64,
    diagnostics: DriverDiagnostics,
    published: DriverDiagnostics,
}

impl GpsDriver {
    /// Opens the configured connection and binds publishers.
    pub fn connect(
        bus: &Bus,
        clock: VirtualClock,
        config: &DriverConfig,
    ) -> Result<GpsDriver, DriverError> {
        config.validate()?;
        let endpoint = Endpoint::open(&config.connection, Role::Connect, clock)?;
        GpsDriver::from_endpoint(bus, endpoint, config)
    }

    /// Wraps an already-open endpoint (tests and custom wiring).
    pub fn from_endpoint(
        bus: &Bus,
        endpoint: Endpoint,
        config: &DriverConfig,
    ) -> Result<GpsDriver, DriverError> {
        config.validate()?;
        bus.register_payload_kind(kind::GPS_FIX);
        bus.register_payload_kind(DIAGNOSTICS_KIND);
        Ok(GpsDriver {
            endpoint,
            parser: NmeaParser::new(),
            fix_pub: bus.publisher(&config.topic("gps/fix"), kind::GPS_FIX)?,
            diag_pub: bus.publisher("diagnostics/gps", DIAGNOSTICS_KIND)?,
            resync_limit: config.resync_limit,
            diagnostics: DriverDiagnostics::default(),
            published: DriverDiagnostics::default(),
        })
    }

    /// Reads whatever the device sent and publishes completed fixes.
    pub fn poll(&mut self, now: Timestamp) -> Result<(), DriverError> {
        let bytes = self.endpoint.read_available();
        self.ingest(now, &bytes)
    }

    /// Parses a chunk of the raw stream directly (replayed logs use this).
    pub fn ingest(&mut self, now: Timestamp, bytes: &[u8]) -> Result<(), DriverError> {
        for fix in self.parser.feed(bytes) {
            self.fix_pub.publish_at(fix.time, fix.to_payload())?;
        }
        sync_and_publish(
            &mut self.diagnostics,
            self.parser.counters(),
            self.resync_limit,
            &mut self.published,
            &mut self.diag_pub,
            now,
        )?;
        Ok(())
    }

    pub fn diagnostics(&self) -> &DriverDiagnostics {
        &self.diagnostics
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }
}
