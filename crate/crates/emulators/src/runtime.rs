//! The three device emulators. Each owns one endpoint, samples a ground-truth
//! source (live world or recorded log), applies its seeded noise model, and
//! writes protocol-exact bytes. Emissions happen at `stream_start + k·period`
//! for k ≥ 1 and are stamped with the scheduled time, so virtual-clock runs
//! are reproducible bit for bit.

use std::sync::{Arc, Mutex};

use dtp_core::geo::{enu_to_geo, EnuPosition, GeoError};
use dtp_core::measure::{GpsFix, ImuSample, LidarScan, MeasureError};
use dtp_core::time::Timestamp;
use dtp_replay::{Direction, Replayer};
use dtp_scenario::{NoiseModel, ScanGeometry, Scenario, ScenarioError};
use dtp_transport::{Endpoint, TransportError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::imu::{encode_frame, saturate_sample};
use crate::lidar::{
    encode_packet, range_to_wire, LidarEncodeError, CMD_INFO, CMD_START, CMD_STOP, ERR_RESPONSE,
    INFO_RESPONSE,
};
use crate::nmea::{encode_fix, NmeaEncodeError};

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("ground-truth sampling failed: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("geodetic noise application failed: {0}")]
    Geo(#[from] GeoError),
    #[error("NMEA encoding failed: {0}")]
    Nmea(#[from] NmeaEncodeError),
    #[error("IMU encoding failed: {0}")]
    Measure(#[from] MeasureError),
    #[error("LiDAR encoding failed: {0}")]
    Lidar(#[from] LidarEncodeError),
    #[error("cannot switch ground-truth source while the emulator is running")]
    SourceSwitchWhileRunning,
    #[error("emulator started without a ground-truth source")]
    NoSource,
}

/// Where an emulator gets its data: the live deterministic world, or a
/// recorded log already sliced down to this device's channel.
pub enum GroundTruthSource {
    Live(Arc<Mutex<Scenario>>),
    Replay(Replayer),
}

/// Splitmix64 step, used to derive independent per-sensor noise seeds from
/// the one scenario seed.
fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const GPS_NOISE_SALT: u64 = 0x6770_7300;
pub const IMU_NOISE_SALT: u64 = 0x696D_7500;
pub const LIDAR_NOISE_SALT: u64 = 0x6C64_7200;

fn period_ns(rate_hz: f64) -> u64 {
    (1e9 / rate_hz).round() as u64
}

/// Fixed-period emission schedule: first emission one period after start.
struct Schedule {
    period_ns: u64,
    start: Option<Timestamp>,
    next_k: u64,
}

impl Schedule {
    fn new(rate_hz: f64) -> Self {
        Schedule {
            period_ns: period_ns(rate_hz),
            start: None,
            next_k: 1,
        }
    }

    fn begin(&mut self, now: Timestamp) {
        self.start = Some(now);
        self.next_k = 1;
    }

    fn halt(&mut self) {
        self.start = None;
    }

    /// Next scheduled emission time if it is due by `now`.
    fn pop_due(&mut self, now: Timestamp) -> Option<Timestamp> {
        let start = self.start?;
        let t = start.0 + self.next_k * self.period_ns;
        if t <= now.0 {
            self.next_k += 1;
            Some(Timestamp(t))
        } else {
            None
        }
    }
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("validated sigma"))
}

fn apply_gps_noise(
    fix: &GpsFix,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<GpsFix, GeoError> {
    let Some(normal) = gaussian(noise.gps_horizontal_sigma_m) else {
        return Ok(fix.clone());
    };
    let east_m = normal.sample(rng);
    let north_m = normal.sample(rng);
    let position = enu_to_geo(
        &fix.position,
        &EnuPosition {
            east_m,
            north_m,
            up_m: 0.0,
        },
    )?;
    Ok(GpsFix { position, ..*fix })
}

fn apply_imu_noise(sample: &ImuSample, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> ImuSample {
    let mut s = *sample;
    let to_dds = 10.0_f64.to_degrees(); // rad/s → tenths of a degree per second
    if let Some(normal) = gaussian(noise.gyro_white_sigma_rps) {
        for g in s.gyro_dds.iter_mut() {
            *g += normal.sample(rng) * to_dds;
        }
    }
    // The constant bias sits on the fused (z) axis.
    s.gyro_dds[2] += noise.gyro_bias_rps * to_dds;
    s
}

fn apply_lidar_noise(
    ranges_m: &mut [f64],
    max_range_m: f64,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) {
    let sentinel = max_range_m + 1.0;
    let normal = gaussian(noise.lidar_range_sigma_m);
    let dropout = noise.lidar_dropout_prob;
    for r in ranges_m.iter_mut() {
        let jitter = normal.as_ref().map(|n| n.sample(rng)).unwrap_or(0.0);
        let dropped = dropout > 0.0 && rng.gen::<f64>() < dropout;
        if *r > max_range_m {
            continue; // no return stays no return
        }
        if dropped {
            *r = sentinel;
        } else {
            *r += jitter;
            if *r > max_range_m {
                *r = sentinel;
            }
        }
    }
}

/// GPS receiver emulator: emits one GGA + RMC pair per period.
pub struct GpsEmulator {
    endpoint: Endpoint,
    source: Option<GroundTruthSource>,
    schedule: Schedule,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    running: bool,
}

impl GpsEmulator {
    pub fn new(endpoint: Endpoint, rate_hz: f64, noise: NoiseModel, seed: u64) -> Self {
        GpsEmulator {
            endpoint,
            source: None,
            schedule: Schedule::new(rate_hz),
            noise,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, GPS_NOISE_SALT)),
            running: false,
        }
    }

    pub fn attach_source(&mut self, source: GroundTruthSource) -> Result<(), EmulatorError> {
        if self.running {
            return Err(EmulatorError::SourceSwitchWhileRunning);
        }
        self.source = Some(source);
        Ok(())
    }

    pub fn start(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        if self.source.is_none() {
            return Err(EmulatorError::NoSource);
        }
        self.schedule.begin(now);
        self.running = true;
        Ok(())
    }

    pub fn stop(&mut self) {
        self.running = false;
        self.schedule.halt();
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn poll(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        // A GPS receiver has no command channel: discard inbound bytes.
        let _ = self.endpoint.read_available();
        if !self.running {
            return Ok(());
        }
        let Self {
            endpoint,
            source,
            schedule,
            noise,
            rng,
            ..
        } = self;
        match source.as_mut() {
            None => Ok(()),
            Some(GroundTruthSource::Replay(player)) => {
                for rec in player.due(now) {
                    if rec.direction == Direction::FromDevice {
                        endpoint.write(&rec.payload)?;
                    }
                }
                Ok(())
            }
            Some(GroundTruthSource::Live(world)) => {
                while let Some(t) = schedule.pop_due(now) {
                    let truth = world.lock().unwrap().sample_gps(t)?;
                    let noisy = apply_gps_noise(&truth, noise, rng)?;
                    let text = encode_fix(&noisy)?;
                    endpoint.write(text.as_bytes())?;
                }
                Ok(())
            }
        }
    }
}

/// IMU emulator: emits one binary frame per period with a wrapping sequence
/// counter; out-of-range truth saturates like a real part's ADC.
pub struct ImuEmulator {
    endpoint: Endpoint,
    source: Option<GroundTruthSource>,
    schedule: Schedule,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    seq: u8,
    running: bool,
}

impl ImuEmulator {
    pub fn new(endpoint: Endpoint, rate_hz: f64, noise: NoiseModel, seed: u64) -> Self {
        ImuEmulator {
            endpoint,
            source: None,
            schedule: Schedule::new(rate_hz),
            noise,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, IMU_NOISE_SALT)),
            seq: 0,
            running: false,
        }
    }

    pub fn attach_source(&mut self, source: GroundTruthSource) -> Result<(), EmulatorError> {
        if self.running {
            return Err(EmulatorError::SourceSwitchWhileRunning);
        }
        self.source = Some(source);
        Ok(())
    }

    pub fn start(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        if self.source.is_none() {
            return Err(EmulatorError::NoSource);
        }
        self.schedule.begin(now);
        self.running = true;
        Ok(())
    }

    pub fn stop(&mut self) {
        self.running = false;
        self.schedule.halt();
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn poll(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        let _ = self.endpoint.read_available();
        if !self.running {
            return Ok(());
        }
        let Self {
            endpoint,
            source,
            schedule,
            noise,
            rng,
            seq,
            ..
        } = self;
        match source.as_mut() {
            None => Ok(()),
            Some(GroundTruthSource::Replay(player)) => {
                for rec in player.due(now) {
                    if rec.direction == Direction::FromDevice {
                        endpoint.write(&rec.payload)?;
                    }
                }
                Ok(())
            }
            Some(GroundTruthSource::Live(world)) => {
                while let Some(t) = schedule.pop_due(now) {
                    let truth = world.lock().unwrap().sample_imu(t);
                    let noisy = saturate_sample(&apply_imu_noise(&truth, noise, rng));
                    let frame = encode_frame(&noisy, *seq)?;
                    *seq = seq.wrapping_add(1);
                    endpoint.write(&frame)?;
                }
                Ok(())
            }
        }
    }
}

/// Command limit: garbage without a newline is flushed beyond this size so
/// hostile input cannot grow the buffer without bound.
const MAX_COMMAND_BUFFER: usize = 1024;

/// LiDAR emulator: text commands in (`START`/`STOP`/`INFO`), binary scan
/// packets out while scanning.
pub struct LidarEmulator {
    endpoint: Endpoint,
    source: Option<GroundTruthSource>,
    schedule: Schedule,
    geometry: ScanGeometry,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    scanning: bool,
    scan_id: u32,
    cmd_buf: Vec<u8>,
    running: bool,
}

impl LidarEmulator {
    pub fn new(
        endpoint: Endpoint,
        rate_hz: f64,
        geometry: ScanGeometry,
        noise: NoiseModel,
        seed: u64,
    ) -> Self {
        LidarEmulator {
            endpoint,
            source: None,
            schedule: Schedule::new(rate_hz),
            geometry,
            noise,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, LIDAR_NOISE_SALT)),
            scanning: false,
            scan_id: 0,
            cmd_buf: Vec::new(),
            running: false,
        }
    }

    pub fn attach_source(&mut self, source: GroundTruthSource) -> Result<(), EmulatorError> {
        if self.running {
            return Err(EmulatorError::SourceSwitchWhileRunning);
        }
        self.source = Some(source);
        Ok(())
    }

    pub fn start(&mut self, _now: Timestamp) -> Result<(), EmulatorError> {
        if self.source.is_none() {
            return Err(EmulatorError::NoSource);
        }
        // Scan emission additionally waits for the START command.
        self.running = true;
        Ok(())
    }

    pub fn stop(&mut self) {
        self.running = false;
        self.scanning = false;
        self.schedule.halt();
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn poll(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        let inbound = self.endpoint.read_available();
        if !self.running {
            return Ok(());
        }
        let replaying = matches!(self.source, Some(GroundTruthSource::Replay(_)));
        if replaying {
            // Playback covers command responses too; live handling stays off.
            let Some(GroundTruthSource::Replay(player)) = self.source.as_mut() else {
                unreachable!()
            };
            for rec in player.due(now) {
                if rec.direction == Direction::FromDevice {
                    self.endpoint.write(&rec.payload)?;
                }
            }
            return Ok(());
        }
        self.cmd_buf.extend_from_slice(&inbound);
        self.process_commands(now)?;
        if self.cmd_buf.len() > MAX_COMMAND_BUFFER {
            self.cmd_buf.clear();
        }
        if self.scanning {
            self.emit_due_scans(now)?;
        }
        Ok(())
    }

    fn process_commands(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        while let Some(pos) = self.cmd_buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = self.cmd_buf.drain(..=pos).collect();
            let text = String::from_utf8_lossy(&line);
            match text.trim_end_matches(['\r', '\n']) {
                CMD_START => {
                    self.scanning = true;
                    self.schedule.begin(now);
                }
                CMD_STOP => {
                    self.scanning = false;
                    self.schedule.halt();
                }
                CMD_INFO => self.endpoint.write(INFO_RESPONSE.as_bytes())?,
                _ => self.endpoint.write(ERR_RESPONSE.as_bytes())?,
            }
        }
        Ok(())
    }

    fn emit_due_scans(&mut self, now: Timestamp) -> Result<(), EmulatorError> {
        let Self {
            endpoint,
            source,
            schedule,
            geometry,
            noise,
            rng,
            scan_id,
            ..
        } = self;
        let Some(GroundTruthSource::Live(world)) = source.as_mut() else {
            return Ok(());
        };
        while let Some(t) = schedule.pop_due(now) {
            let mut ranges_m = world.lock().unwrap().sample_lidar(t)?;
            apply_lidar_noise(&mut ranges_m, geometry.max_range_m, noise, rng);
            *scan_id += 1;
            let scan = LidarScan {
                time: t,
                scan_id: *scan_id,
                start_angle_urad: geometry.start_angle_urad,
                angle_increment_urad: geometry.angle_increment_urad,
                ranges_mm: ranges_m
                    .iter()
                    .map(|&r| range_to_wire(r, geometry.max_range_m))
                    .collect(),
            };
            endpoint.write(&encode_packet(&scan)?)?;
        }
        Ok(())
    }
}
