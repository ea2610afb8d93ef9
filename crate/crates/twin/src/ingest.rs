//! Projection of LiDAR scans into world-frame points.
//!
//! The ranging sensor sweeps an across-track fan: a beam at fan angle φ
//! points along (0, sin φ, −cos φ) in the sensor frame (φ = 0 straight down,
//! positive φ toward +y). Each non-zero range becomes a 3D point via the
//! mount transform and then the fused vehicle pose; zero ranges are the
//! wire's no-return marker and produce no point. A scan whose pose estimate
//! is older than one scan period is rejected — projecting through a stale
//! pose smears the surface.

use dtp_core::measure::LidarScan;
use dtp_core::pose::{Pose3D, RigidTransform, Vec3};

use crate::fusion::PoseEstimate;
use crate::TwinError;

/// Beam direction in the sensor frame for fan angle `phi` (radians).
#[inline]
pub fn beam_direction(phi: f64) -> Vec3 {
    Vec3::new(0.0, phi.sin(), -phi.cos())
}

/// Vehicle-to-world transform implied by a fused pose. The filter observes
/// yaw only, so the transform is planar (roll = pitch = 0).
pub fn vehicle_transform(pose: &PoseEstimate) -> RigidTransform {
    Pose3D::new(pose.position, 0.0, 0.0, pose.yaw).transform()
}

/// Projects every returning beam of `scan` into the world frame.
///
/// `mount` is the sensor-to-vehicle transform (the calibrated mount) and
/// `max_pose_age_ns` the staleness bound — one scan period in normal use.
pub fn ingest_scan(
    scan: &LidarScan,
    pose: &PoseEstimate,
    mount: &RigidTransform,
    max_pose_age_ns: u64,
) -> Result<Vec<Vec3>, TwinError> {
    let age = scan.time.as_nanos().abs_diff(pose.t.as_nanos());
    if age > max_pose_age_ns {
        return Err(TwinError::StalePose {
            pose_age_ns: age,
            max_ns: max_pose_age_ns,
        });
    }
    let sensor_to_world = vehicle_transform(pose).compose(mount);
    let mut points = Vec::with_capacity(scan.ranges_mm.len());
    for (i, &mm) in scan.ranges_mm.iter().enumerate() {
        if mm == 0 {
            continue; // no return
        }
        let range_m = mm as f64 * 1e-3;
        let p = beam_direction(scan.beam_angle_rad(i)) * range_m;
        points.push(sensor_to_world.transform_point(p));
    }
    Ok(points)
}
