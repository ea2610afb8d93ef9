//! Serde-friendly scenario configuration: world, vehicle, sensor rig, noise.
//!
//! These structs are the in-memory form of the per-scenario config file
//! sections; the CLI crate layers run/faults/checks sections on top.

use dtp_core::geo::GeoCoordinate;
use dtp_core::pose::Pose3D;
use dtp_core::pose::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heightfield::HeapBox;
use crate::raycast::ScanGeometry;
use crate::tractor::Waypoint;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("tick_dt must be positive, got {0}")]
    TickDt(f64),
    #[error("duration must be non-negative, got {0}")]
    Duration(f64),
    #[error("waypoint list must be non-empty for a driven scenario")]
    NoWaypoints,
    #[error("compaction factor k must lie in (0, 1], got {0}")]
    CompactionFactor(f64),
    #[error("noise parameter {name} must be {requirement}, got {value}")]
    Noise {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("vehicle {name} must be positive, got {value}")]
    Vehicle { name: &'static str, value: f64 },
    #[error("rig {name}: {problem}")]
    Rig {
        name: &'static str,
        problem: String,
    },
    #[error("world origin invalid: {0}")]
    Origin(#[from] dtp_core::geo::GeoError),
    #[error("heightfield invalid: {0}")]
    Field(#[from] crate::heightfield::FieldError),
    #[error("sensor rate {name} must divide evenly into ticks (rate {rate_hz} Hz vs tick_dt {tick_dt} s)")]
    RateAlignment {
        name: &'static str,
        rate_hz: f64,
        tick_dt: f64,
    },
}

/// Geodetic anchor plus the heightfield layout and heap contents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    #[serde(default)]
    pub origin_alt_m: f64,
    pub field_origin_x: f64,
    pub field_origin_y: f64,
    pub cell_size_m: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    #[serde(default)]
    pub heap: Vec<HeapBox>,
    #[serde(default = "default_compaction_k")]
    pub compaction_k: f64,
    /// Compaction floor as a fraction of each cell's initial height.
    #[serde(default = "default_floor_fraction")]
    pub compaction_floor_fraction: f64,
}

fn default_compaction_k() -> f64 {
    0.7
}

fn default_floor_fraction() -> f64 {
    0.5
}

impl WorldConfig {
    pub fn origin(&self) -> Result<GeoCoordinate, ConfigError> {
        Ok(GeoCoordinate::new(
            self.origin_lat_deg,
            self.origin_lon_deg,
            self.origin_alt_m,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    #[serde(default = "default_wheelbase")]
    pub wheelbase_m: f64,
    #[serde(default = "default_footprint_length")]
    pub footprint_length_m: f64,
    #[serde(default = "default_footprint_width")]
    pub footprint_width_m: f64,
    pub start_x: f64,
    pub start_y: f64,
    #[serde(default)]
    pub start_yaw_deg: f64,
    #[serde(default = "default_max_steer_deg")]
    pub max_steer_deg: f64,
    #[serde(default = "default_accel_limit")]
    pub accel_limit_mps2: f64,
    #[serde(default = "default_capture_radius")]
    pub capture_radius_m: f64,
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
}

fn default_wheelbase() -> f64 {
    2.4
}
fn default_footprint_length() -> f64 {
    3.2
}
fn default_footprint_width() -> f64 {
    1.8
}
fn default_max_steer_deg() -> f64 {
    52.0
}
fn default_accel_limit() -> f64 {
    1.5
}
fn default_capture_radius() -> f64 {
    0.6
}

/// Per-sensor noise intensities; zero everywhere means bit-exact truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub gps_horizontal_sigma_m: f64,
    pub gyro_bias_rps: f64,
    pub gyro_white_sigma_rps: f64,
    pub lidar_range_sigma_m: f64,
    pub lidar_dropout_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            gps_horizontal_sigma_m: 0.0,
            gyro_bias_rps: 0.0,
            gyro_white_sigma_rps: 0.0,
            lidar_range_sigma_m: 0.0,
            lidar_dropout_prob: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let non_negative = [
            ("gps_horizontal_sigma_m", self.gps_horizontal_sigma_m),
            ("gyro_white_sigma_rps", self.gyro_white_sigma_rps),
            ("lidar_range_sigma_m", self.lidar_range_sigma_m),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ConfigError::Noise {
                    name,
                    requirement: "a non-negative finite number",
                    value,
                });
            }
        }
        if !self.gyro_bias_rps.is_finite() {
            return Err(ConfigError::Noise {
                name: "gyro_bias_rps",
                requirement: "finite",
                value: self.gyro_bias_rps,
            });
        }
        if !(0.0..=1.0).contains(&self.lidar_dropout_prob) {
            return Err(ConfigError::Noise {
                name: "lidar_dropout_prob",
                requirement: "within [0, 1]",
                value: self.lidar_dropout_prob,
            });
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.gps_horizontal_sigma_m == 0.0
            && self.gyro_bias_rps == 0.0
            && self.gyro_white_sigma_rps == 0.0
            && self.lidar_range_sigma_m == 0.0
            && self.lidar_dropout_prob == 0.0
    }
}

/// Rigid mount of one sensor relative to the vehicle frame (rear axle,
/// x forward / y left / z up), angles in degrees for config readability.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MountConfig {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

impl Default for MountConfig {
    fn default() -> Self {
        MountConfig {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            roll_deg: 0.0,
            pitch_deg: 0.0,
            yaw_deg: 0.0,
        }
    }
}

impl MountConfig {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        MountConfig {
            x,
            y,
            z,
            ..Default::default()
        }
    }

    pub fn pose(&self) -> Pose3D {
        Pose3D::new(
            Vec3::new(self.x, self.y, self.z),
            self.roll_deg.to_radians(),
            self.pitch_deg.to_radians(),
            self.yaw_deg.to_radians(),
        )
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GpsRigConfig {
    pub mount: MountConfig,
    pub rate_hz: f64,
}

impl Default for GpsRigConfig {
    fn default() -> Self {
        GpsRigConfig {
            mount: MountConfig::at(0.0, 0.0, 2.5),
            rate_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ImuRigConfig {
    pub mount: MountConfig,
    pub rate_hz: f64,
}

impl Default for ImuRigConfig {
    fn default() -> Self {
        ImuRigConfig {
            mount: MountConfig::at(0.0, 0.0, 1.0),
            rate_hz: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LidarRigConfig {
    pub mount: MountConfig,
    pub rate_hz: f64,
    /// Fan geometry in the exact integer microradians carried on the wire.
    pub start_angle_urad: i32,
    pub angle_increment_urad: u32,
    pub beam_count: u16,
    pub max_range_m: f64,
}

impl Default for LidarRigConfig {
    fn default() -> Self {
        LidarRigConfig {
            mount: MountConfig::at(0.5, 0.0, 3.0),
            rate_hz: 10.0,
            // ±45° fan at 0.5° spacing (8727 µrad ≈ 0.50002°), 181 beams.
            start_angle_urad: -785_430,
            angle_increment_urad: 8727,
            beam_count: 181,
            max_range_m: 10.0,
        }
    }
}

impl LidarRigConfig {
    pub fn geometry(&self) -> ScanGeometry {
        ScanGeometry {
            start_angle_urad: self.start_angle_urad,
            angle_increment_urad: self.angle_increment_urad,
            beam_count: self.beam_count,
            max_range_m: self.max_range_m,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub gps: GpsRigConfig,
    pub imu: ImuRigConfig,
    pub lidar: LidarRigConfig,
}

/// Everything the deterministic world needs to run one scenario.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulation tick, seconds; every sensor period must be a whole number
    /// of ticks.
    pub tick_dt: f64,
    /// Virtual run length, seconds.
    pub duration: f64,
    pub world: WorldConfig,
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub rig: RigConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tick_dt > 0.0) || !self.tick_dt.is_finite() {
            return Err(ConfigError::TickDt(self.tick_dt));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(ConfigError::Duration(self.duration));
        }
        if self.vehicle.waypoints.is_empty() && self.duration > 0.0 {
            return Err(ConfigError::NoWaypoints);
        }
        if !(self.world.compaction_k > 0.0 && self.world.compaction_k <= 1.0) {
            return Err(ConfigError::CompactionFactor(self.world.compaction_k));
        }
        if !(0.0..=1.0).contains(&self.world.compaction_floor_fraction) {
            return Err(ConfigError::CompactionFactor(
                self.world.compaction_floor_fraction,
            ));
        }
        for (name, value) in [
            ("wheelbase_m", self.vehicle.wheelbase_m),
            ("footprint_length_m", self.vehicle.footprint_length_m),
            ("footprint_width_m", self.vehicle.footprint_width_m),
            ("max_steer_deg", self.vehicle.max_steer_deg),
            ("accel_limit_mps2", self.vehicle.accel_limit_mps2),
            ("capture_radius_m", self.vehicle.capture_radius_m),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::Vehicle { name, value });
            }
        }
        if self.vehicle.max_steer_deg >= 90.0 {
            return Err(ConfigError::Vehicle {
                name: "max_steer_deg",
                value: self.vehicle.max_steer_deg,
            });
        }
        self.noise.validate()?;
        self.world.origin()?;
        let lidar = &self.rig.lidar;
        if lidar.beam_count == 0 || lidar.beam_count > 3600 {
            return Err(ConfigError::Rig {
                name: "lidar.beam_count",
                problem: format!("must be in [1, 3600], got {}", lidar.beam_count),
            });
        }
        if lidar.beam_count > 1 && lidar.angle_increment_urad == 0 {
            return Err(ConfigError::Rig {
                name: "lidar.angle_increment_urad",
                problem: "must be non-zero for multi-beam scans".to_string(),
            });
        }
        if !(lidar.max_range_m > 0.0) || !lidar.max_range_m.is_finite() {
            return Err(ConfigError::Rig {
                name: "lidar.max_range_m",
                problem: format!("must be positive, got {}", lidar.max_range_m),
            });
        }
        for (name, rate) in [
            ("gps", self.rig.gps.rate_hz),
            ("imu", self.rig.imu.rate_hz),
            ("lidar", self.rig.lidar.rate_hz),
        ] {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(ConfigError::Rig {
                    name: "rate_hz",
                    problem: format!("{name} rate must be positive, got {rate}"),
                });
            }
            let period_ns = 1e9 / rate;
            let tick_ns = self.tick_dt * 1e9;
            let ratio = period_ns / tick_ns;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(ConfigError::RateAlignment {
                    name: match name {
                        "gps" => "gps",
                        "imu" => "imu",
                        _ => "lidar",
                    },
                    rate_hz: rate,
                    tick_dt: self.tick_dt,
                });
            }
        }
        Ok(())
    }

    pub fn tick_dt_nanos(&self) -> u64 {
        (self.tick_dt * 1e9).round() as u64
    }
}
