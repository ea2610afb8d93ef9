//! Binary LiDAR driver: sends the session commands, reassembles "LDTP"
//! packets with CRC verification, and publishes scans. A lost link is
//! retried once per scan period, three times, then flagged.

use crate::diagnostics::{
    sync_and_publish, DriverConfig, DriverDiagnostics, DriverError, StreamCounters,
    DIAGNOSTICS_KIND,
};
use dtp_core::bus::{Bus, Publisher};
use dtp_core::measure::{kind, LidarScan};
use dtp_core::time::{Timestamp, VirtualClock};
use dtp_core::wire::crc16_ccitt_false;
use dtp_transport::{Endpoint, Role};

const MAGIC: [u8; 4] = *b"LDTP";
/// Magic + scan_id + t_ns + start_angle + increment + count.
const HEADER_LEN: usize = 26;
const MAX_BEAMS: u16 = 3600;
/// Largest packet the wire format allows; bounds decoder memory.
pub const MAX_PACKET_LEN: usize = HEADER_LEN + 2 * MAX_BEAMS as usize + 2;

/// Reconnect attempts before the driver declares the link dead.
const RECONNECT_ATTEMPTS: u32 = 3;

/// Byte-stream → scan state machine; recovery is "hunt for the next magic".
#[derive(Debug, Default)]
pub struct LidarPacketDecoder {
    buf: Vec<u8>,
    counters: StreamCounters,
    in_skip: bool,
}

impl LidarPacketDecoder {
    pub fn new() -> LidarPacketDecoder {
        LidarPacketDecoder::default()
    }

    pub fn counters(&self) -> StreamCounters {
        self.counters
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Discards any partial packet; used when the link drops mid-packet.
    pub fn clear(&mut self) {
        self.buf.clear();
        self.in_skip = false;
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<LidarScan> {
        self.buf.extend_from_slice(bytes);
        let mut scans = Vec::new();
        loop {
            if !self.seek_magic() {
                break;
            }
            if self.buf.len() < HEADER_LEN {
                break; // magic seen, header incomplete
            }
            let count = u16::from_le_bytes([self.buf[24], self.buf[25]]);
            if count == 0 || count > MAX_BEAMS {
                self.counters.frames_dropped += 1;
                self.buf.drain(..MAGIC.len()); // step past this magic, hunt the next
                continue;
            }
            let total = HEADER_LEN + 2 * count as usize + 2;
            if self.buf.len() < total {
                break; // waiting for the body (bounded by MAX_PACKET_LEN)
            }
            let want = u16::from_le_bytes([self.buf[total - 2], self.buf[total - 1]]);
            if crc16_ccitt_false(&self.buf[4..total - 2]) == want {
                scans.push(decode_packet(&self.buf[..total], count));
                self.buf.drain(..total);
                self.counters.frames_ok += 1;
            } else {
                self.counters.frames_dropped += 1;
                self.buf.drain(..MAGIC.len());
            }
        }
        scans
    }

    /// Positions the buffer on the next magic; returns false when none is
    /// in view (then at most 3 bytes are retained as a possible prefix).
    fn seek_magic(&mut self) -> bool {
        if self.buf.len() >= 4 && self.buf[0..4] == MAGIC {
            self.in_skip = false;
            return true;
        }
        match self.buf.windows(4).position(|w| w == MAGIC) {
            Some(p) => {
                self.note_skip();
                self.buf.drain(..p);
                self.in_skip = false;
                true
            }
            None => {
                let keep = self.buf.len().min(3);
                let longest_prefix = (0..=keep)
                    .rev()
                    .find(|&k| self.buf[self.buf.len() - k..] == MAGIC[..k])
                    .unwrap_or(0);
                if self.buf.len() > longest_prefix {
                    self.note_skip();
                    let cut = self.buf.len() - longest_prefix;
                    self.buf.drain(..cut);
                }
                false
            }
        }
    }

    fn note_skip(&mut self) {
        if !self.in_skip {
            self.counters.resyncs += 1;
            self.in_skip = true;
        }
    }
}

fn decode_packet(packet: &[u8], count: u16) -> LidarScan {
    let u32_at = |o: usize| u32::from_le_bytes(packet[o..o + 4].try_into().unwrap());
    let ranges_mm = packet[HEADER_LEN..HEADER_LEN + 2 * count as usize]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LidarScan {
        time: Timestamp(u64::from_le_bytes(packet[8..16].try_into().unwrap())),
        scan_id: u32_at(4),
        start_angle_urad: u32_at(16) as i32,
        angle_increment_urad: u32_at(20),
        ranges_mm,
    }
}

enum Link {
    Up,
    /// Waiting to retry; `attempt` counts from 1.
    Backoff { attempt: u32, next_try: Timestamp },
    /// Gave up after the retry budget; needs operator attention.
    Down,
}

/// Owns one endpoint + decoder, manages the device session, and publishes
/// on `<prefix>/lidar/scan`.
pub struct LidarDriver {
    endpoint: Endpoint,
    decoder: LidarPacketDecoder,
    scan_pub: Publisher,
    diag_pub: Publisher,
    period_ns: u64,
    resync_limit: u64,
    link: Link,
    diagnostics: DriverDiagnostics,
    published: DriverDiagnostics,
}

impl LidarDriver {
    pub fn connect(
        bus: &Bus,
        clock: VirtualClock,
        config: &DriverConfig,
    ) -> Result<LidarDriver, DriverError> {
        config.validate()?;
        let endpoint = Endpoint::open(&config.connection, Role::Connect, clock)?;
        LidarDriver::from_endpoint(bus, endpoint, config)
    }

    pub fn from_endpoint(
        bus: &Bus,
        endpoint: Endpoint,
        config: &DriverConfig,
    ) -> Result<LidarDriver, DriverError> {
        config.validate()?;
        bus.register_payload_kind(kind::LIDAR_SCAN);
        bus.register_payload_kind(DIAGNOSTICS_KIND);
        // Session opener; on an unplugged wire this is silently discarded
        // and the backoff path below will re-send it after reconnecting.
        endpoint.write(b"START\n")?;
        Ok(LidarDriver {
            endpoint,
            decoder: LidarPacketDecoder::new(),
            scan_pub: bus.publisher(&config.topic("lidar/scan"), kind::LIDAR_SCAN)?,
            diag_pub: bus.publisher("diagnostics/lidar", DIAGNOSTICS_KIND)?,
            period_ns: config.period_ns(),
            resync_limit: config.resync_limit,
            link: Link::Up,
            diagnostics: DriverDiagnostics::default(),
            published: DriverDiagnostics::default(),
        })
    }

    pub fn poll(&mut self, now: Timestamp) -> Result<(), DriverError> {
        match self.link {
            Link::Up => {
                if !self.endpoint.is_connected() {
                    // Stream integrity died with the link.
                    self.decoder.clear();
                    self.link = Link::Backoff {
                        attempt: 1,
                        next_try: Timestamp(now.0 + self.period_ns),
                    };
                } else {
                    let bytes = self.endpoint.read_available();
                    self.ingest(now, &bytes)?;
                }
            }
            Link::Backoff { attempt, next_try } => {
                if now >= next_try {
                    if self.endpoint.reconnect().is_ok() && self.endpoint.is_connected() {
                        self.endpoint.write(b"START\n")?;
                        self.diagnostics.reconnects += 1;
                        self.link = Link::Up;
                    } else if attempt >= RECONNECT_ATTEMPTS {
                        self.diagnostics.last_error = Some(format!(
                            "link lost; reconnect failed after {RECONNECT_ATTEMPTS} attempts"
                        ));
                        self.link = Link::Down;
                    } else {
                        self.link = Link::Backoff {
                            attempt: attempt + 1,
                            next_try: Timestamp(now.0 + self.period_ns),
                        };
                    }
                }
            }
            Link::Down => {}
        }
        sync_and_publish(
            &mut self.diagnostics,
            self.decoder.counters(),
            self.resync_limit,
            &mut self.published,
            &mut self.diag_pub,
            now,
        )?;
        Ok(())
    }

    /// Parses a chunk of the raw stream directly (replayed logs use this).
    pub fn ingest(&mut self, now: Timestamp, bytes: &[u8]) -> Result<(), DriverError> {
        for scan in self.decoder.feed(bytes) {
            self.scan_pub.publish_at(scan.time, scan.to_payload())?;
        }
        sync_and_publish(
            &mut self.diagnostics,
            self.decoder.counters(),
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

    pub fn link_is_up(&self) -> bool {
        matches!(self.link, Link::Up)
    }
}
