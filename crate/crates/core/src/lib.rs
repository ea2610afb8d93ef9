//! Core vocabulary for the sensor-bar digital twin prototype: virtual time,
//! the pub/sub bus, geodetic/ENU conversion, rigid transforms, measurement
//! types, and the checksums shared between emulators and drivers.

pub mod bus;
pub mod geo;
pub mod measure;
pub mod pose;
pub mod time;
pub mod wire;

pub use bus::{Bus, BusError, Envelope, Publisher, Subscription, Topic, TopicPattern};
pub use geo::{enu_to_geo, geo_to_enu, EnuPosition, GeoCoordinate, GeoError, EARTH_RADIUS_M};
pub use measure::{GpsFix, ImuSample, LidarScan, MeasureError, STANDARD_GRAVITY_MPS2};
pub use pose::{normalize_angle, Pose3D, RigidTransform, Vec3};
pub use time::{ClockError, FiredTimer, Timestamp, TimerId, VirtualClock};
pub use wire::{crc16_ccitt_false, nmea_checksum, nmea_checksum_hex};
