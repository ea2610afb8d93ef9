//! Binary IMU driver: hunts for the AA 55 sync pattern, CRC-checks each
//! 22-byte frame, and publishes decoded samples.

use crate::diagnostics::{
    sync_and_publish, DriverConfig, DriverDiagnostics, DriverError, StreamCounters,
    DIAGNOSTICS_KIND,
};
use dtp_core::bus::{Bus, Publisher};
use dtp_core::measure::{kind, ImuSample};
use dtp_core::time::{Timestamp, VirtualClock};
use dtp_core::wire::crc16_ccitt_false;
use dtp_transport::{Endpoint, Role};

/// Frame layout: AA 55 | len | seq | t_ms:u32 | 3×accel i16 | 3×gyro i16
/// | crc:u16 over bytes 2..20.
pub const FRAME_LEN: usize = 22;
const SYNC: [u8; 2] = [0xAA, 0x55];
const PAYLOAD_LEN: u8 = 17;

/// Byte-stream → sample state machine with one-byte-advance resync. Holds
/// at most one partial frame, so memory stays bounded on any input.
#[derive(Debug, Default)]
pub struct ImuFrameDecoder {
    buf: Vec<u8>,
    counters: StreamCounters,
    /// True while inside a run of skipped bytes; one run = one resync.
    in_skip: bool,
}

impl ImuFrameDecoder {
    pub fn new() -> ImuFrameDecoder {
        ImuFrameDecoder::default()
    }

    pub fn counters(&self) -> StreamCounters {
        self.counters
    }

    /// Bytes currently held back waiting for a frame to complete.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<ImuSample> {
        self.buf.extend_from_slice(bytes);
        let mut samples = Vec::new();
        loop {
            if self.buf.len() < 2 {
                break;
            }
            if self.buf[0..2] != SYNC {
                self.skip_byte();
                continue;
            }
            if self.buf.len() < 3 {
                break; // sync seen, waiting for the length byte
            }
            if self.buf[2] != PAYLOAD_LEN {
                self.skip_byte();
                continue;
            }
            if self.buf.len() < FRAME_LEN {
                break; // plausible header, waiting for the body
            }
            let frame = &self.buf[..FRAME_LEN];
            let want = u16::from_le_bytes([frame[20], frame[21]]);
            if crc16_ccitt_false(&frame[2..20]) == want {
                samples.push(decode_frame(frame));
                self.buf.drain(..FRAME_LEN);
                self.counters.frames_ok += 1;
                self.in_skip = false;
            } else {
                self.counters.frames_dropped += 1;
                self.skip_byte();
            }
        }
        samples
    }

    fn skip_byte(&mut self) {
        self.buf.drain(..1);
        if !self.in_skip {
            self.counters.resyncs += 1;
            self.in_skip = true;
        }
    }
}

fn decode_frame(frame: &[u8]) -> ImuSample {
    let i16_at = |o: usize| i16::from_le_bytes([frame[o], frame[o + 1]]) as f64;
    let t_ms = u32::from_le_bytes(frame[4..8].try_into().unwrap());
    ImuSample {
        time: Timestamp::from_millis(t_ms as u64),
        accel_mg: [i16_at(8), i16_at(10), i16_at(12)],
        gyro_dds: [i16_at(14), i16_at(16), i16_at(18)],
    }
}

/// Owns one endpoint + decoder and publishes on `<prefix>/imu/sample`.
pub struct ImuDriver {
    endpoint: Endpoint,
    decoder: ImuFrameDecoder,
    sample_pub: Publisher,
    diag_pub: Publisher,
    resync_limit: u64,
    diagnostics: DriverDiagnostics,
    published: DriverDiagnostics,
}

impl ImuDriver {
    pub fn connect(
        bus: &Bus,
        clock: VirtualClock,
        config: &DriverConfig,
    ) -> Result<ImuDriver, DriverError> {
        config.validate()?;
        let endpoint = Endpoint::open(&config.connection, Role::Connect, clock)?;
        ImuDriver::from_endpoint(bus, endpoint, config)
    }

    pub fn from_endpoint(
        bus: &Bus,
        endpoint: Endpoint,
        config: &DriverConfig,
    ) -> Result<ImuDriver, DriverError> {
        config.validate()?;
        bus.register_payload_kind(kind::IMU_SAMPLE);
        bus.register_payload_kind(DIAGNOSTICS_KIND);
        Ok(ImuDriver {
            endpoint,
            decoder: ImuFrameDecoder::new(),
            sample_pub: bus.publisher(&config.topic("imu/sample"), kind::IMU_SAMPLE)?,
            diag_pub: bus.publisher("diagnostics/imu", DIAGNOSTICS_KIND)?,
            resync_limit: config.resync_limit,
            diagnostics: DriverDiagnostics::default(),
            published: DriverDiagnostics::default(),
        })
    }

    pub fn poll(&mut self, now: Timestamp) -> Result<(), DriverError> {
        let bytes = self.endpoint.read_available();
        self.ingest(now, &bytes)
    }

    pub fn ingest(&mut self, now: Timestamp, bytes: &[u8]) -> Result<(), DriverError> {
        for sample in self.decoder.feed(bytes) {
            self.sample_pub
                .publish_at(sample.time, sample.to_payload())?;
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
}
