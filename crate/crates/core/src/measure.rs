//! Decoded measurement types published on the bus, and their payload codecs.
//!
//! Drivers produce these from device bytes; the twin consumes them. The bus
//! payload encodings are fixed little-endian layouts so that an envelope
//! stream hashes identically across runs and platforms.

use thiserror::Error;

use crate::geo::GeoCoordinate;
use crate::pose::Vec3;
use crate::time::Timestamp;

/// Standard gravity used to convert the IMU's milli-g wire units to SI.
pub const STANDARD_GRAVITY_MPS2: f64 = 9.80665;

/// Bus payload kind identifiers. Registered once by whoever owns the bus.
pub mod kind {
    pub const GPS_FIX: &str = "gps-fix.v1";
    pub const IMU_SAMPLE: &str = "imu-sample.v1";
    pub const LIDAR_SCAN: &str = "lidar-scan.v1";
    pub const TWIN_STATE: &str = "twin-state.v1";
    pub const TWIN_CALIBRATION: &str = "twin-calibration.v1";
    pub const TWIN_COMMAND: &str = "twin-command.v1";

    pub const ALL: &[&str] = &[
        GPS_FIX,
        IMU_SAMPLE,
        LIDAR_SCAN,
        TWIN_STATE,
        TWIN_CALIBRATION,
        TWIN_COMMAND,
    ];
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("payload is {got} bytes, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("fix quality {0} invalid (must be 0 or 1)")]
    Quality(u8),
    #[error("HDOP must be positive when a fix is held")]
    Hdop,
    #[error("coordinate invalid: {0}")]
    Coordinate(#[from] crate::geo::GeoError),
    #[error("angular increment must be positive")]
    ZeroIncrement,
    #[error("beam count {0} outside [1, 3600]")]
    BeamCount(usize),
    #[error("value not finite")]
    NotFinite,
    #[error("inertial value {0} outside the signed 16-bit wire range")]
    ImuRange(f64),
}

/// One merged GPS epoch: position from GGA, motion from RMC.
#[derive(Debug, Clone, PartialEq)]
pub struct GpsFix {
    pub time: Timestamp,
    pub position: GeoCoordinate,
    /// 0 = no fix, 1 = fix held.
    pub quality: u8,
    pub satellites: u8,
    pub hdop: f64,
    pub speed_mps: f64,
    /// True course over ground, degrees clockwise from north.
    pub course_deg: f64,
}

impl GpsFix {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.quality > 1 {
            return Err(MeasureError::Quality(self.quality));
        }
        if self.quality == 1 && !(self.hdop > 0.0) {
            return Err(MeasureError::Hdop);
        }
        if !self.hdop.is_finite() || !self.speed_mps.is_finite() || !self.course_deg.is_finite() {
            return Err(MeasureError::NotFinite);
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(58);
        out.extend_from_slice(&self.time.as_nanos().to_le_bytes());
        out.extend_from_slice(&self.position.latitude_deg.to_le_bytes());
        out.extend_from_slice(&self.position.longitude_deg.to_le_bytes());
        out.extend_from_slice(&self.position.altitude_m.to_le_bytes());
        out.push(self.quality);
        out.push(self.satellites);
        out.extend_from_slice(&self.hdop.to_le_bytes());
        out.extend_from_slice(&self.speed_mps.to_le_bytes());
        out.extend_from_slice(&self.course_deg.to_le_bytes());
        out
    }

    pub fn from_payload(buf: &[u8]) -> Result<GpsFix, MeasureError> {
        if buf.len() != 58 {
            return Err(MeasureError::Length {
                got: buf.len(),
                expected: 58,
            });
        }
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let fix = GpsFix {
            time: Timestamp::from_nanos(u64::from_le_bytes(buf[0..8].try_into().unwrap())),
            position: GeoCoordinate::new(f64_at(8), f64_at(16), f64_at(24))?,
            quality: buf[32],
            satellites: buf[33],
            hdop: f64_at(34),
            speed_mps: f64_at(42),
            course_deg: f64_at(50),
        };
        fix.validate()?;
        Ok(fix)
    }
}

/// One inertial sample in the device's native wire units. Fields are f64 so
/// ground-truth samples keep full precision; the wire frame quantizes them to
/// signed 16-bit at encode time, like the ADC in a real IMU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub time: Timestamp,
    /// Specific force, milli-g per LSB.
    pub accel_mg: [f64; 3],
    /// Angular rate, 0.1 degree/second per LSB.
    pub gyro_dds: [f64; 3],
}

impl ImuSample {
    /// All fields must fit the signed 16-bit wire encoding.
    pub fn validate(&self) -> Result<(), MeasureError> {
        for v in self.accel_mg.iter().chain(self.gyro_dds.iter()) {
            if !v.is_finite() {
                return Err(MeasureError::NotFinite);
            }
            if v.round() < i16::MIN as f64 || v.round() > i16::MAX as f64 {
                return Err(MeasureError::ImuRange(*v));
            }
        }
        Ok(())
    }

    /// Specific force in m/s².
    pub fn accel_mps2(&self) -> Vec3 {
        let k = STANDARD_GRAVITY_MPS2 / 1000.0;
        Vec3::new(
            self.accel_mg[0] * k,
            self.accel_mg[1] * k,
            self.accel_mg[2] * k,
        )
    }

    /// Angular rate in rad/s.
    pub fn gyro_rps(&self) -> Vec3 {
        let k = 0.1f64.to_radians();
        Vec3::new(
            self.gyro_dds[0] * k,
            self.gyro_dds[1] * k,
            self.gyro_dds[2] * k,
        )
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(56);
        out.extend_from_slice(&self.time.as_nanos().to_le_bytes());
        for v in self.accel_mg.iter().chain(self.gyro_dds.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_payload(buf: &[u8]) -> Result<ImuSample, MeasureError> {
        if buf.len() != 56 {
            return Err(MeasureError::Length {
                got: buf.len(),
                expected: 56,
            });
        }
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        Ok(ImuSample {
            time: Timestamp::from_nanos(u64::from_le_bytes(buf[0..8].try_into().unwrap())),
            accel_mg: [f64_at(8), f64_at(16), f64_at(24)],
            gyro_dds: [f64_at(32), f64_at(40), f64_at(48)],
        })
    }
}

/// One LiDAR sweep. Angles are integer microradians exactly as on the wire,
/// so republishing a decoded scan is lossless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LidarScan {
    pub time: Timestamp,
    pub scan_id: u32,
    pub start_angle_urad: i32,
    pub angle_increment_urad: u32,
    /// Millimetres; 0 means no return.
    pub ranges_mm: Vec<u16>,
}

impl LidarScan {
    pub const MAX_BEAMS: usize = 3600;

    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.angle_increment_urad == 0 {
            return Err(MeasureError::ZeroIncrement);
        }
        if self.ranges_mm.is_empty() || self.ranges_mm.len() > Self::MAX_BEAMS {
            return Err(MeasureError::BeamCount(self.ranges_mm.len()));
        }
        Ok(())
    }

    /// Beam angle in radians for beam index `i`.
    pub fn beam_angle_rad(&self, i: usize) -> f64 {
        (self.start_angle_urad as f64 + i as f64 * self.angle_increment_urad as f64) * 1e-6
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + 2 * self.ranges_mm.len());
        out.extend_from_slice(&self.time.as_nanos().to_le_bytes());
        out.extend_from_slice(&self.scan_id.to_le_bytes());
        out.extend_from_slice(&self.start_angle_urad.to_le_bytes());
        out.extend_from_slice(&self.angle_increment_urad.to_le_bytes());
        out.extend_from_slice(&(self.ranges_mm.len() as u16).to_le_bytes());
        for r in &self.ranges_mm {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn from_payload(buf: &[u8]) -> Result<LidarScan, MeasureError> {
        if buf.len() < 22 {
            return Err(MeasureError::Length {
                got: buf.len(),
                expected: 22,
            });
        }
        let count = u16::from_le_bytes(buf[20..22].try_into().unwrap()) as usize;
        let expected = 22 + 2 * count;
        if buf.len() != expected {
            return Err(MeasureError::Length {
                got: buf.len(),
                expected,
            });
        }
        let scan = LidarScan {
            time: Timestamp::from_nanos(u64::from_le_bytes(buf[0..8].try_into().unwrap())),
            scan_id: u32::from_le_bytes(buf[8..12].try_into().unwrap()),
            start_angle_urad: i32::from_le_bytes(buf[12..16].try_into().unwrap()),
            angle_increment_urad: u32::from_le_bytes(buf[16..20].try_into().unwrap()),
            ranges_mm: buf[22..]
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        scan.validate()?;
        Ok(scan)
    }
}
