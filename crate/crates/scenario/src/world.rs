//! The deterministic ground-truth world: a tractor driving waypoints over a
//! compactable heightfield, sampled by ideal (noiseless) sensors.
//!
//! The world advances only in fixed ticks (`step_to`); between ticks every
//! `sample_*` call is read-only, so emulators may sample concurrently. All
//! randomness lives downstream in the emulators — two worlds built from the
//! same config evolve bit-identically.

use std::collections::{HashMap, HashSet, VecDeque};

use dtp_core::geo::{enu_to_geo, EnuPosition, GeoCoordinate, GeoError};
use dtp_core::measure::{GpsFix, ImuSample, STANDARD_GRAVITY_MPS2};
use dtp_core::pose::{normalize_angle, Pose3D, RigidTransform, Vec3};
use dtp_core::time::Timestamp;
use thiserror::Error;

use crate::config::{RigConfig, ScenarioConfig};
use crate::heightfield::{HeapBox, HeightField};
use crate::raycast::{raycast_scan, RaycastError, ScanGeometry};
use crate::tractor::{Controls, TractorState, WaypointFollower};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration invalid: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("geodetic conversion failed: {0}")]
    Geo(#[from] GeoError),
    #[error("heightfield invalid: {0}")]
    Field(#[from] crate::heightfield::FieldError),
    #[error("raycast failed: {0}")]
    Raycast(#[from] RaycastError),
}

/// Nominal truth-fix quality figures (ideal receiver, noise added later).
const TRUTH_SATELLITES: u8 = 12;
const TRUTH_HDOP: f64 = 0.8;

pub struct Scenario {
    origin: GeoCoordinate,
    field: HeightField,
    heap_boxes: Vec<HeapBox>,
    tractor: TractorState,
    follower: WaypointFollower,
    manual_controls: Option<Controls>,
    rig: RigConfig,
    now: Timestamp,
    tick_ns: u64,
    tick_dt: f64,
    compaction_k: f64,
    /// Most recent poses, newest last; three are enough for second
    /// differences.
    history: VecDeque<Pose3D>,
    prev_footprint: HashSet<(usize, usize)>,
    pass_counts: HashMap<(usize, usize), u32>,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let origin = config.world.origin()?;
        // Fill in compaction floors: explicit per-box floor wins, otherwise
        // the configured fraction of the initial height.
        let boxes: Vec<HeapBox> = config
            .world
            .heap
            .iter()
            .map(|b| {
                let mut b = *b;
                if b.min_height == 0.0 {
                    b.min_height = config.world.compaction_floor_fraction * b.height;
                }
                b
            })
            .collect();
        let field = HeightField::from_boxes(
            config.world.field_origin_x,
            config.world.field_origin_y,
            config.world.cell_size_m,
            config.world.cells_x,
            config.world.cells_y,
            &boxes,
        )?;
        let v = &config.vehicle;
        let mut tractor = TractorState::new(
            v.start_x,
            v.start_y,
            v.start_yaw_deg.to_radians(),
            v.wheelbase_m,
            v.footprint_length_m,
            v.footprint_width_m,
        );
        tractor.pose = Pose3D::new(
            Vec3::new(v.start_x, v.start_y, field.height_at(v.start_x, v.start_y)),
            0.0,
            0.0,
            v.start_yaw_deg.to_radians(),
        );
        let mut follower = WaypointFollower::new(v.waypoints.clone());
        follower.max_steer = v.max_steer_deg.to_radians();
        follower.accel_limit = v.accel_limit_mps2;
        follower.capture_radius = v.capture_radius_m;
        let mut scenario = Scenario {
            origin,
            field,
            heap_boxes: boxes,
            tractor,
            follower,
            manual_controls: None,
            rig: config.rig,
            now: Timestamp::ZERO,
            tick_ns: config.tick_dt_nanos(),
            tick_dt: config.tick_dt,
            compaction_k: config.world.compaction_k,
            history: VecDeque::with_capacity(3),
            prev_footprint: HashSet::new(),
            pass_counts: HashMap::new(),
        };
        scenario.history.push_back(scenario.tractor.pose);
        // Being placed on the heap is the first pass over those cells.
        scenario.update_footprint();
        Ok(scenario)
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn field(&self) -> &HeightField {
        &self.field
    }

    pub fn tractor(&self) -> &TractorState {
        &self.tractor
    }

    pub fn rig(&self) -> &RigConfig {
        &self.rig
    }

    pub fn origin(&self) -> &GeoCoordinate {
        &self.origin
    }

    pub fn route_finished(&self) -> bool {
        self.follower.finished()
    }

    /// Cells of the configured heap region, for coverage-fraction metrics.
    pub fn heap_cells(&self) -> Vec<(usize, usize)> {
        self.field.cells_in_boxes(&self.heap_boxes)
    }

    pub fn pass_counts(&self) -> &HashMap<(usize, usize), u32> {
        &self.pass_counts
    }

    pub fn truth_volume(&self) -> f64 {
        self.field.volume()
    }

    /// Overrides the waypoint follower with fixed controls (scripted
    /// maneuvers); `None` hands control back.
    pub fn set_manual_controls(&mut self, controls: Option<Controls>) {
        self.manual_controls = controls;
    }

    /// Advances the world in whole ticks up to (never past) `t`.
    pub fn step_to(&mut self, t: Timestamp) {
        while Timestamp(self.now.0 + self.tick_ns) <= t {
            self.tick();
        }
    }

    fn tick(&mut self) {
        let controls = match self.manual_controls {
            Some(c) => c,
            None => self.follower.controls(&self.tractor, self.tick_dt),
        };
        self.tractor.step(controls, self.tick_dt, &self.field);
        self.now = Timestamp(self.now.0 + self.tick_ns);
        self.history.push_back(self.tractor.pose);
        if self.history.len() > 3 {
            self.history.pop_front();
        }
        self.update_footprint();
    }

    /// Compacts cells the footprint newly entered this tick and counts the
    /// pass; lingering on a cell does not compact it again.
    fn update_footprint(&mut self) {
        let cells = self.tractor.footprint_cells(&self.field);
        let current: HashSet<(usize, usize)> = cells.iter().copied().collect();
        for &cell in &cells {
            if !self.prev_footprint.contains(&cell) {
                self.field.compact_cell(cell.0, cell.1, self.compaction_k);
                *self.pass_counts.entry(cell).or_insert(0) += 1;
            }
        }
        self.prev_footprint = current;
    }

    fn vehicle_transform(&self) -> RigidTransform {
        RigidTransform::from_pose(&self.tractor.pose)
    }

    fn mount_world_point(pose: &Pose3D, mount: Vec3) -> Vec3 {
        RigidTransform::from_pose(pose).transform_point(mount)
    }

    /// World position of the GPS antenna.
    pub fn gps_world_position(&self) -> Vec3 {
        let m = self.rig.gps.mount;
        self.vehicle_transform().transform_point(Vec3::new(m.x, m.y, m.z))
    }

    /// Sensor-to-world transform of the LiDAR optical frame.
    pub fn lidar_world_transform(&self) -> RigidTransform {
        self.vehicle_transform()
            .compose(&RigidTransform::from_pose(&self.rig.lidar.mount.pose()))
    }

    pub fn lidar_geometry(&self) -> ScanGeometry {
        self.rig.lidar.geometry()
    }

    /// Noiseless GPS truth at the antenna: geodetic position, speed over
    /// ground, and compass course from one-tick finite differences.
    pub fn sample_gps(&self, t: Timestamp) -> Result<GpsFix, ScenarioError> {
        let m = self.rig.gps.mount;
        let mount = Vec3::new(m.x, m.y, m.z);
        let p_now = Self::mount_world_point(self.history.back().unwrap(), mount);
        let (speed, course_deg) = if self.history.len() >= 2 {
            let p_prev =
                Self::mount_world_point(&self.history[self.history.len() - 2], mount);
            let ve = (p_now.x - p_prev.x) / self.tick_dt;
            let vn = (p_now.y - p_prev.y) / self.tick_dt;
            let speed = ve.hypot(vn);
            let course = if speed > 1e-12 {
                let c = ve.atan2(vn).to_degrees();
                if c < 0.0 {
                    c + 360.0
                } else {
                    c
                }
            } else {
                0.0
            };
            (speed, course)
        } else {
            (0.0, 0.0)
        };
        let position = enu_to_geo(
            &self.origin,
            &EnuPosition {
                east_m: p_now.x,
                north_m: p_now.y,
                up_m: p_now.z,
            },
        )?;
        Ok(GpsFix {
            time: t,
            position,
            quality: 1,
            satellites: TRUTH_SATELLITES,
            hdop: TRUTH_HDOP,
            speed_mps: speed,
            course_deg,
        })
    }

    /// Noiseless IMU truth in wire units: specific force (milli-g) and body
    /// rates (0.1°/s), both expressed in the sensor frame. Rates come from
    /// one-tick yaw differences, accelerations from second differences of
    /// the mount point.
    pub fn sample_imu(&self, t: Timestamp) -> ImuSample {
        let m = self.rig.imu.mount;
        let mount = Vec3::new(m.x, m.y, m.z);
        let n = self.history.len();
        let gyro_body_z = if n >= 2 {
            let yaw_now = self.history[n - 1].yaw;
            let yaw_prev = self.history[n - 2].yaw;
            normalize_angle(yaw_now - yaw_prev) / self.tick_dt
        } else {
            0.0
        };
        let a_world = if n >= 3 {
            let p0 = Self::mount_world_point(&self.history[n - 1], mount);
            let p1 = Self::mount_world_point(&self.history[n - 2], mount);
            let p2 = Self::mount_world_point(&self.history[n - 3], mount);
            (p0 - p1 * 2.0 + p2) * (1.0 / (self.tick_dt * self.tick_dt))
        } else {
            Vec3::new(0.0, 0.0, 0.0)
        };
        let gravity = Vec3::new(0.0, 0.0, -STANDARD_GRAVITY_MPS2);
        let vehicle_rot = RigidTransform::from_pose(self.history.back().unwrap()).inverse();
        let mount_rot = RigidTransform::from_pose(&self.rig.imu.mount.pose()).inverse();
        let f_body = vehicle_rot.rotate_vector(a_world - gravity);
        let f_sensor = mount_rot.rotate_vector(f_body);
        let w_sensor = mount_rot.rotate_vector(Vec3::new(0.0, 0.0, gyro_body_z));
        let to_mg = 1000.0 / STANDARD_GRAVITY_MPS2;
        let to_dds = 10.0_f64.to_degrees(); // rad/s → tenths of °/s
        ImuSample {
            time: t,
            accel_mg: [f_sensor.x * to_mg, f_sensor.y * to_mg, f_sensor.z * to_mg],
            gyro_dds: [w_sensor.x * to_dds, w_sensor.y * to_dds, w_sensor.z * to_dds],
        }
    }

    /// Noiseless LiDAR truth: per-beam ranges in meters with the sentinel
    /// `max_range + 1` for no-return beams.
    pub fn sample_lidar(&self, _t: Timestamp) -> Result<Vec<f64>, ScenarioError> {
        let xf = self.lidar_world_transform();
        Ok(raycast_scan(&self.field, &xf, &self.rig.lidar.geometry())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ScenarioConfig, VehicleConfig, WorldConfig};
    use crate::tractor::Waypoint;
    use dtp_core::geo::geo_to_enu;

    fn config_with(waypoints: Vec<Waypoint>, heap: Vec<HeapBox>) -> ScenarioConfig {
        ScenarioConfig {
            seed: 1,
            tick_dt: 0.005,
            duration: 30.0,
            world: WorldConfig {
                origin_lat_deg: 54.0,
                origin_lon_deg: 10.0,
                origin_alt_m: 0.0,
                field_origin_x: -40.0,
                field_origin_y: -40.0,
                cell_size_m: 0.5,
                cells_x: 160,
                cells_y: 160,
                heap,
                compaction_k: 0.5,
                compaction_floor_fraction: 0.5,
            },
            vehicle: VehicleConfig {
                wheelbase_m: 2.4,
                footprint_length_m: 3.2,
                footprint_width_m: 1.8,
                start_x: 0.0,
                start_y: 0.0,
                start_yaw_deg: 0.0,
                max_steer_deg: 52.0,
                accel_limit_mps2: 1.5,
                capture_radius_m: 0.6,
                waypoints,
            },
            noise: Default::default(),
            rig: Default::default(),
        }
    }

    fn straight_run() -> ScenarioConfig {
        config_with(
            vec![Waypoint {
                x: 20.0,
                y: 0.0,
                speed: 2.0,
            }],
            vec![],
        )
    }

    #[test]
    fn stationary_tractor_reads_zero_speed_and_zero_rates() {
        let mut cfg = straight_run();
        cfg.vehicle.waypoints = vec![Waypoint {
            x: 0.0,
            y: 0.0,
            speed: 1.0,
        }];
        let mut s = Scenario::new(&cfg).unwrap();
        s.step_to(Timestamp::from_millis(500));
        let t = s.now();
        let fix = s.sample_gps(t).unwrap();
        assert_eq!(fix.speed_mps, 0.0);
        let imu = s.sample_imu(t);
        assert_eq!(imu.gyro_dds, [0.0, 0.0, 0.0]);
        assert!((imu.accel_mg[0]).abs() < 1e-9);
        assert!((imu.accel_mg[1]).abs() < 1e-9);
        assert!((imu.accel_mg[2] - 1000.0).abs() < 1e-9, "z = {}", imu.accel_mg[2]);
    }

    #[test]
    fn constant_turn_rate_appears_on_gyro_z_within_1e6() {
        let cfg = straight_run();
        let mut s = Scenario::new(&cfg).unwrap();
        let speed = 2.0;
        let delta = 0.35_f64;
        s.set_manual_controls(Some(Controls {
            speed,
            steering_angle: delta,
        }));
        s.step_to(Timestamp::from_millis(2000));
        let omega = speed / cfg.vehicle.wheelbase_m * delta.tan();
        let imu = s.sample_imu(s.now());
        let gyro_rps = imu.gyro_rps();
        assert!(
            (gyro_rps.z - omega).abs() < 1e-6,
            "gyro z {} vs ω {omega}",
            gyro_rps.z
        );
        assert_eq!(gyro_rps.x, 0.0);
        assert_eq!(gyro_rps.y, 0.0);
    }

    #[test]
    fn gps_fix_round_trips_to_antenna_position_within_1mm() {
        let cfg = straight_run();
        let mut s = Scenario::new(&cfg).unwrap();
        s.step_to(Timestamp::from_millis(3000));
        let fix = s.sample_gps(s.now()).unwrap();
        let enu = geo_to_enu(s.origin(), &fix.position).unwrap();
        let antenna = s.gps_world_position();
        assert!((enu.east_m - antenna.x).abs() < 1e-3);
        assert!((enu.north_m - antenna.y).abs() < 1e-3);
        assert!((enu.up_m - antenna.z).abs() < 1e-3);
    }

    #[test]
    fn gps_course_points_along_motion() {
        let mut cfg = straight_run();
        // Drive due north (+y): compass course 0°.
        cfg.vehicle.start_yaw_deg = 90.0;
        cfg.vehicle.waypoints = vec![Waypoint {
            x: 0.0,
            y: 30.0,
            speed: 2.0,
        }];
        let mut s = Scenario::new(&cfg).unwrap();
        s.step_to(Timestamp::from_millis(4000));
        let fix = s.sample_gps(s.now()).unwrap();
        assert!((fix.speed_mps - 2.0).abs() < 1e-6, "speed {}", fix.speed_mps);
        let course = if fix.course_deg > 180.0 {
            fix.course_deg - 360.0
        } else {
            fix.course_deg
        };
        assert!(course.abs() < 0.5, "course {course}");
    }

    #[test]
    fn driving_over_heap_compacts_and_volume_never_increases() {
        let heap = vec![HeapBox {
            x0: 5.0,
            y0: -5.0,
            x1: 15.0,
            y1: 5.0,
            height: 1.0,
            min_height: 0.0,
        }];
        let cfg = config_with(
            vec![Waypoint {
                x: 25.0,
                y: 0.0,
                speed: 2.0,
            }],
            heap,
        );
        let mut s = Scenario::new(&cfg).unwrap();
        let v0 = s.truth_volume();
        let mut last = v0;
        for k in 1..40 {
            s.step_to(Timestamp::from_millis(k * 500));
            let v = s.truth_volume();
            assert!(v <= last + 1e-12, "volume rose: {last} -> {v}");
            last = v;
        }
        assert!(last < v0, "no compaction happened");
        s.field().check().unwrap();
        assert!(!s.pass_counts().is_empty());
    }

    #[test]
    fn lingering_does_not_recompact_or_recount() {
        let heap = vec![HeapBox {
            x0: -5.0,
            y0: -5.0,
            x1: 5.0,
            y1: 5.0,
            height: 2.0,
            min_height: 0.0,
        }];
        let cfg = config_with(
            vec![Waypoint {
                x: 0.0,
                y: 0.0,
                speed: 1.0,
            }],
            heap,
        );
        let mut s = Scenario::new(&cfg).unwrap();
        let volume_after_placement = s.truth_volume();
        let counts_before = s.pass_counts().clone();
        s.step_to(Timestamp::from_secs_f64(5.0));
        assert_eq!(s.truth_volume(), volume_after_placement);
        assert_eq!(s.pass_counts(), &counts_before);
    }

    #[test]
    fn two_worlds_same_config_evolve_bit_identically() {
        let heap = vec![HeapBox {
            x0: 3.0,
            y0: -6.0,
            x1: 18.0,
            y1: 6.0,
            height: 1.5,
            min_height: 0.0,
        }];
        let cfg = config_with(
            vec![
                Waypoint {
                    x: 20.0,
                    y: 0.0,
                    speed: 2.0,
                },
                Waypoint {
                    x: 20.0,
                    y: 10.0,
                    speed: 1.5,
                },
            ],
            heap,
        );
        let mut a = Scenario::new(&cfg).unwrap();
        let mut b = Scenario::new(&cfg).unwrap();
        for k in 1..=20 {
            let t = Timestamp::from_millis(k * 700);
            a.step_to(t);
            b.step_to(t);
            assert_eq!(a.tractor().pose, b.tractor().pose);
            let (fa, fb) = (a.sample_gps(a.now()).unwrap(), b.sample_gps(b.now()).unwrap());
            assert_eq!(fa.position.latitude_deg.to_bits(), fb.position.latitude_deg.to_bits());
            assert_eq!(fa.speed_mps.to_bits(), fb.speed_mps.to_bits());
            let (ia, ib) = (a.sample_imu(a.now()), b.sample_imu(b.now()));
            assert_eq!(ia.gyro_dds[2].to_bits(), ib.gyro_dds[2].to_bits());
            let (la, lb) = (
                a.sample_lidar(a.now()).unwrap(),
                b.sample_lidar(b.now()).unwrap(),
            );
            assert_eq!(la.len(), lb.len());
            for (x, y) in la.iter().zip(lb.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(a.truth_volume().to_bits(), b.truth_volume().to_bits());
    }

    #[test]
    fn lidar_truth_sees_flat_ground_at_mount_height() {
        let cfg = straight_run();
        let s = Scenario::new(&cfg).unwrap();
        let ranges = s.sample_lidar(s.now()).unwrap();
        let geom = s.lidar_geometry();
        let h = cfg.rig.lidar.mount.z;
        for (i, r) in ranges.iter().enumerate() {
            let phi = geom.beam_angle_rad(i);
            let expect = h / phi.cos();
            if expect <= geom.max_range_m {
                assert!((r - expect).abs() < 2e-3, "beam {i}: {r} vs {expect}");
            }
        }
    }

    #[test]
    fn step_to_never_oversteps() {
        let cfg = straight_run();
        let mut s = Scenario::new(&cfg).unwrap();
        s.step_to(Timestamp::from_nanos(12_499_999));
        assert_eq!(s.now(), Timestamp::from_millis(10));
        s.step_to(Timestamp::from_millis(20));
        assert_eq!(s.now(), Timestamp::from_millis(20));
    }
}
