//! Complementary GPS/gyro pose filter.
//!
//! Heading integrates the z gyro and is pulled toward the GPS course with
//! gain `alpha` once per accepted fix, but only while the vehicle moves
//! faster than `v_min` (course is meaningless when stationary). Position is
//! dead-reckoned along the heading at the last GPS ground speed and corrected
//! toward the fix with gain `beta` (`beta_z` vertically — altitude has no
//! dead-reckoning model, so it follows the fix outright by default). When no
//! quality-1 fix arrives within the timeout the estimate is flagged degraded
//! and both sigmas grow linearly until the next fix.

use dtp_core::geo::{geo_to_enu, GeoCoordinate};
use dtp_core::measure::{GpsFix, ImuSample};
use dtp_core::pose::{normalize_angle, Vec3};
use dtp_core::time::Timestamp;

use crate::TwinError;

/// Fused vehicle pose: the rear-axle frame origin in the site ENU frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    /// Time of the newest measurement folded into this estimate.
    pub t: Timestamp,
    /// ENU position of the vehicle reference point (rear axle), metres.
    pub position: Vec3,
    /// Heading about +z, radians counter-clockwise from east, in (-pi, pi].
    pub yaw: f64,
    pub position_sigma_m: f64,
    pub yaw_sigma_rad: f64,
}

/// Filter gains and dispersion bookkeeping; all values documented defaults.
#[derive(Debug, Clone, Copy)]
pub struct FuserConfig {
    /// Heading correction gain toward GPS course, applied once per fix.
    pub alpha: f64,
    /// Horizontal position correction gain per fix.
    pub beta: f64,
    /// Vertical position gain per fix; 1.0 means altitude follows the fix
    /// outright (the ground height under the vehicle changes as the heap
    /// compacts, so stale altitude is worse than a jumpy one).
    pub beta_z: f64,
    /// Ground speed below which GPS course carries no heading information.
    pub v_min_mps: f64,
    /// Seconds without a quality-1 fix before the estimate turns degraded.
    pub fix_timeout_s: f64,
    /// Position sigma after a fix: `hdop * this` metres.
    pub pos_sigma_per_hdop_m: f64,
    /// Position sigma growth while degraded, metres per second.
    pub pos_sigma_growth_mps: f64,
    /// Heading sigma right after a moving fix, radians.
    pub yaw_sigma_base_rad: f64,
    /// Heading sigma growth while degraded, radians per second.
    pub yaw_sigma_growth_rps: f64,
    /// GPS antenna offset in the vehicle frame, metres.
    pub gps_mount: Vec3,
}

impl Default for FuserConfig {
    fn default() -> Self {
        FuserConfig {
            alpha: 0.1,
            beta: 0.3,
            beta_z: 1.0,
            v_min_mps: 0.3,
            fix_timeout_s: 1.0,
            pos_sigma_per_hdop_m: 0.5,
            pos_sigma_growth_mps: 0.5,
            yaw_sigma_base_rad: 0.05,
            yaw_sigma_growth_rps: 0.02,
            gps_mount: Vec3::ZERO,
        }
    }
}

/// Incremental GPS + gyro fusion; feed measurements in time order.
pub struct PoseFuser {
    cfg: FuserConfig,
    origin: GeoCoordinate,
    position: Vec3,
    yaw: f64,
    speed_mps: f64,
    have_fix: bool,
    have_yaw: bool,
    pos_sigma: f64,
    yaw_sigma: f64,
    last_fix_time: Timestamp,
    last_imu_time: Option<Timestamp>,
    /// Newest time the filter knows about, from any source.
    last_time: Timestamp,
    degraded: bool,
}

impl PoseFuser {
    pub fn new(origin: GeoCoordinate, cfg: FuserConfig) -> Self {
        PoseFuser {
            cfg,
            origin,
            position: Vec3::ZERO,
            yaw: 0.0,
            speed_mps: 0.0,
            have_fix: false,
            have_yaw: false,
            pos_sigma: 0.0,
            yaw_sigma: std::f64::consts::PI,
            last_fix_time: Timestamp::ZERO,
            last_imu_time: None,
            last_time: Timestamp::ZERO,
            degraded: false,
        }
    }

    pub fn config(&self) -> &FuserConfig {
        &self.cfg
    }

    /// Advances the filter's notion of "now" without a measurement: past the
    /// fix timeout the estimate degrades and sigmas grow with elapsed time.
    pub fn advance_to(&mut self, now: Timestamp) {
        if now <= self.last_time {
            return;
        }
        if self.have_fix {
            let degraded_from = Timestamp::from_nanos(
                self.last_fix_time.as_nanos()
                    + (self.cfg.fix_timeout_s * 1e9).round() as u64,
            );
            let grow_from = self.last_time.max(degraded_from);
            if now > grow_from {
                let dt = (now.as_nanos() - grow_from.as_nanos()) as f64 * 1e-9;
                self.pos_sigma += self.cfg.pos_sigma_growth_mps * dt;
                self.yaw_sigma += self.cfg.yaw_sigma_growth_rps * dt;
                self.degraded = true;
            }
        }
        self.last_time = now;
    }

    /// Folds in one GPS fix. Quality-0 fixes carry no position and are
    /// ignored (they do not reset the degradation timer either).
    pub fn on_gps(&mut self, fix: &GpsFix) -> Result<(), TwinError> {
        self.advance_to(fix.time);
        if fix.quality != 1 {
            return Ok(());
        }
        let enu = geo_to_enu(&self.origin, &fix.position)?;
        let antenna = Vec3::new(enu.east_m, enu.north_m, enu.up_m);
        // Compass course (degrees clockwise from north) to ENU heading.
        let psi_gps =
            normalize_angle(std::f64::consts::FRAC_PI_2 - fix.course_deg.to_radians());
        if fix.speed_mps > self.cfg.v_min_mps {
            if self.have_yaw {
                self.yaw = normalize_angle(
                    self.yaw + self.cfg.alpha * normalize_angle(psi_gps - self.yaw),
                );
            } else {
                self.yaw = psi_gps;
                self.have_yaw = true;
            }
            self.yaw_sigma = self.cfg.yaw_sigma_base_rad;
        }
        // Antenna to vehicle origin, rotating the mount by the current
        // heading only (vehicle roll/pitch are unobservable here).
        let (sy, cy) = self.yaw.sin_cos();
        let m = self.cfg.gps_mount;
        let vehicle = Vec3::new(
            antenna.x - (cy * m.x - sy * m.y),
            antenna.y - (sy * m.x + cy * m.y),
            antenna.z - m.z,
        );
        if self.have_fix {
            self.position.x += self.cfg.beta * (vehicle.x - self.position.x);
            self.position.y += self.cfg.beta * (vehicle.y - self.position.y);
            self.position.z += self.cfg.beta_z * (vehicle.z - self.position.z);
        } else {
            self.position = vehicle;
            self.have_fix = true;
        }
        self.speed_mps = fix.speed_mps;
        self.pos_sigma = fix.hdop.max(0.1) * self.cfg.pos_sigma_per_hdop_m;
        self.last_fix_time = fix.time;
        self.degraded = false;
        Ok(())
    }

    /// Folds in one inertial sample: integrates the z gyro into heading and
    /// dead-reckons position along it at the last GPS ground speed.
    pub fn on_imu(&mut self, sample: &ImuSample) {
        self.advance_to(sample.time);
        let dt = match self.last_imu_time {
            Some(prev) if sample.time > prev => {
                (sample.time.as_nanos() - prev.as_nanos()) as f64 * 1e-9
            }
            Some(_) => {
                return;
            }
            None => {
                self.last_imu_time = Some(sample.time);
                return;
            }
        };
        self.last_imu_time = Some(sample.time);
        if self.have_yaw {
            self.yaw = normalize_angle(self.yaw + sample.gyro_rps().z * dt);
            if self.have_fix {
                let (sy, cy) = self.yaw.sin_cos();
                self.position.x += self.speed_mps * dt * cy;
                self.position.y += self.speed_mps * dt * sy;
            }
        }
    }

    /// Current fused pose; `None` until the first quality-1 fix.
    pub fn estimate(&self) -> Option<PoseEstimate> {
        if !self.have_fix {
            return None;
        }
        Some(PoseEstimate {
            t: self.last_time,
            position: self.position,
            yaw: normalize_angle(self.yaw),
            position_sigma_m: self.pos_sigma,
            yaw_sigma_rad: self.yaw_sigma,
        })
    }

    /// True once the fix timeout has elapsed without a quality-1 fix.
    pub fn degraded(&self) -> bool {
        self.degraded
    }
}
