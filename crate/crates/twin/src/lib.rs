//! Digital-twin analytics for the tractor-mounted sensor bar.
//!
//! This crate is the software under test in the whole stack: it consumes
//! measurement topics from the bus — never transports or devices directly —
//! and maintains everything an operator needs from the silage heap:
//!
//! * [`fusion`] — complementary-filter pose: GPS position/course corrected
//!   by gyro integration and dead reckoning between fixes;
//! * [`ingest`] — scan-to-world projection through the calibrated mount;
//! * [`surface`] — gridded height reconstruction, volume, observed fraction;
//! * [`coverage`] — compaction pass counts under the vehicle footprint;
//! * [`calibration`] — automatic mount-angle estimation over a surveyed
//!   reference (flat strip plus one known ridge);
//! * [`twin`] — the service loop tying the pieces to bus topics
//!   (`sensors/*`, `twin/command` in; `twin/state`, `twin/calibration` out);
//! * [`state`] — the published snapshot types and their payload codecs.
//!
//! Because the twin sees only topics, it runs unmodified whether those
//! topics come from emulated devices, a replayed log, or real hardware.

pub mod calibration;
pub mod coverage;
pub mod fusion;
pub mod ingest;
pub mod state;
pub mod surface;
pub mod twin;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("configuration invalid: {0}")]
    Config(String),
    #[error("payload malformed: {0}")]
    Payload(String),
    #[error("pose is {pose_age_ns} ns older than the scan (limit {max_ns} ns)")]
    StalePose { pose_age_ns: u64, max_ns: u64 },
    #[error("only {got} straight calibration scans buffered, need {need}")]
    InsufficientScans { got: usize, need: usize },
    #[error("no ridge detections on the {direction} pass")]
    NoRidgeDetections { direction: &'static str },
    #[error("flat-strip residual {residual_m:.4} m exceeds {limit_m:.4} m")]
    NonFlat { residual_m: f64, limit_m: f64 },
    #[error("bus: {0}")]
    Bus(#[from] dtp_core::bus::BusError),
    #[error("geodesy: {0}")]
    Geo(#[from] dtp_core::geo::GeoError),
    #[error("measurement: {0}")]
    Measure(#[from] dtp_core::measure::MeasureError),
}

pub use calibration::{
    calibrate_mount, CalibrationReference, MountCalibration, SensorCalibration,
};
pub use coverage::CoverageMap;
pub use fusion::{FuserConfig, PoseEstimate, PoseFuser};
pub use ingest::{beam_direction, ingest_scan, vehicle_transform};
pub use state::{CalibrationReport, TwinState};
pub use surface::{estimate_volume, ReconstructionGrid, RegionBox};
pub use twin::{
    GridSpec, Twin, TwinConfig, TwinDiagnostics, COMMAND_CALIBRATE, COMMAND_RESET,
    TOPIC_CALIBRATION, TOPIC_COMMAND, TOPIC_SENSORS, TOPIC_STATE,
};
