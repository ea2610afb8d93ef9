//! Deterministic ground-truth world for the sensor-bar testbed: tractor
//! kinematics on a compactable silage heightfield, plus ideal sensor
//! sampling (GPS fix, IMU rates, LiDAR raycasts) for the emulators to
//! perturb and encode.

pub mod config;
pub mod heightfield;
pub mod raycast;
pub mod tractor;
pub mod world;

pub use config::{
    ConfigError, GpsRigConfig, ImuRigConfig, LidarRigConfig, MountConfig, NoiseModel, RigConfig,
    ScenarioConfig, VehicleConfig, WorldConfig,
};
pub use heightfield::{FieldError, HeapBox, HeightField};
pub use raycast::{beam_direction, raycast, raycast_scan, RaycastError, ScanGeometry};
pub use tractor::{Controls, TractorState, Waypoint, WaypointFollower};
pub use world::{Scenario, ScenarioError};
