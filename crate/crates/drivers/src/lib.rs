//! Device drivers for the sensor bar. Each driver speaks one wire protocol
//! over any transport endpoint and publishes parsed measurements to the
//! bus — identically whether the peer is real hardware, a live emulator,
//! or a replayed byte log.

pub mod diagnostics;
pub mod gps;
pub mod imu;
pub mod lidar;

pub use diagnostics::{
    DriverConfig, DriverDiagnostics, DriverError, StreamCounters, DIAGNOSTICS_KIND,
};
pub use gps::{GpsDriver, NmeaParser, KNOTS_TO_MPS, MAX_LINE_LEN};
pub use imu::{ImuDriver, ImuFrameDecoder, FRAME_LEN};
pub use lidar::{LidarDriver, LidarPacketDecoder, MAX_PACKET_LEN};
