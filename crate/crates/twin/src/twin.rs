//! The twin service: a single logical consumer that turns measurement topics
//! into pose, surface, volume, coverage, and calibration outputs.
//!
//! The service talks to the world only through the bus — it subscribes to
//! `sensors/*` and `twin/command` and publishes `twin/state` and
//! `twin/calibration` — so the same code runs unmodified whether the topics
//! are fed by emulated devices, replayed logs, or real hardware.

use std::collections::VecDeque;

use dtp_core::bus::{Bus, Envelope, Publisher, Subscription};
use dtp_core::geo::GeoCoordinate;
use dtp_core::measure::{self, GpsFix, ImuSample, LidarScan};
use dtp_core::pose::Pose3D;
use dtp_core::time::Timestamp;

use crate::calibration::{
    calibrate_mount, CalibrationReference, MountCalibration, SensorCalibration,
};
use crate::coverage::CoverageMap;
use crate::fusion::{FuserConfig, PoseEstimate, PoseFuser};
use crate::ingest::ingest_scan;
use crate::state::{CalibrationReport, TwinState};
use crate::surface::{estimate_volume, ReconstructionGrid, RegionBox};
use crate::TwinError;

/// Topic pattern the twin consumes measurements from.
pub const TOPIC_SENSORS: &str = "sensors/*";
/// Topic the twin accepts commands on.
pub const TOPIC_COMMAND: &str = "twin/command";
/// Topic state snapshots are published on.
pub const TOPIC_STATE: &str = "twin/state";
/// Topic calibration reports are published on.
pub const TOPIC_CALIBRATION: &str = "twin/calibration";

/// Runs mount calibration over the buffered scans.
pub const COMMAND_CALIBRATE: &str = "calibrate";
/// Clears all accumulated estimates (surface, coverage, pose, buffers).
pub const COMMAND_RESET: &str = "reset";

/// Lattice shared by the reconstruction grid and the coverage map; matches
/// the world's terrain grid so estimates compare cell-for-cell with truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size_m: f64,
    pub cells_x: usize,
    pub cells_y: usize,
}

/// Everything the twin needs to know up front; all of it is configuration a
/// real deployment would also carry (datum, grid extent, mount poses).
#[derive(Debug, Clone)]
pub struct TwinConfig {
    /// Geodetic datum of the local ENU frame.
    pub origin: GeoCoordinate,
    pub grid: GridSpec,
    /// World-frame boxes delimiting the heap; observed fraction is measured
    /// over the cells inside them.
    pub heap_region: Vec<RegionBox>,
    /// Vehicle footprint used for compaction coverage.
    pub footprint_length_m: f64,
    pub footprint_width_m: f64,
    pub fuser: FuserConfig,
    /// Configured mounts; the ranging mount is the one refined by `calibrate`.
    pub imu_mount: Pose3D,
    pub lidar_mount: Pose3D,
    /// Virtual-time interval between state snapshots.
    pub state_period_ns: u64,
    /// Scans whose pose is older than this are dropped as stale.
    pub max_pose_age_ns: u64,
    /// Known reference geometry for the `calibrate` command, if surveyed.
    pub calibration: Option<CalibrationReference>,
    /// Ring-buffer capacity of (scan, pose) pairs kept for calibration.
    pub calibration_buffer: usize,
}

impl TwinConfig {
    pub fn new(origin: GeoCoordinate, grid: GridSpec) -> Self {
        TwinConfig {
            origin,
            grid,
            heap_region: Vec::new(),
            footprint_length_m: 3.2,
            footprint_width_m: 1.8,
            fuser: FuserConfig::default(),
            imu_mount: Pose3D::new(dtp_core::pose::Vec3::new(0.0, 0.0, 1.0), 0.0, 0.0, 0.0),
            lidar_mount: Pose3D::new(dtp_core::pose::Vec3::new(0.5, 0.0, 3.0), 0.0, 0.0, 0.0),
            state_period_ns: 1_000_000_000,
            max_pose_age_ns: 100_000_000,
            calibration: None,
            calibration_buffer: 4096,
        }
    }
}

/// Monotonic counters describing what the twin has seen and done. Counters
/// survive `reset` so operators keep the full session history.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TwinDiagnostics {
    pub fixes_accepted: u64,
    pub fixes_rejected: u64,
    pub imu_samples: u64,
    pub scans_ingested: u64,
    pub scans_dropped_stale: u64,
    pub points_out_of_bounds: u64,
    pub decode_errors: u64,
    pub commands_ok: u64,
    pub commands_unknown: u64,
    pub states_published: u64,
}

pub struct Twin {
    cfg: TwinConfig,
    sensors: Subscription,
    commands: Subscription,
    state_pub: Publisher,
    calib_pub: Publisher,
    fuser: PoseFuser,
    grid: ReconstructionGrid,
    coverage: CoverageMap,
    heap_cells: Vec<(usize, usize)>,
    lidar_calibration: SensorCalibration,
    calib_buf: VecDeque<(LidarScan, PoseEstimate)>,
    diagnostics: TwinDiagnostics,
    next_state_at: Timestamp,
    last_state: Option<TwinState>,
}

impl Twin {
    /// Subscribes to the measurement and command topics and registers the
    /// payload kinds this service publishes.
    pub fn new(bus: &Bus, cfg: TwinConfig) -> Result<Twin, TwinError> {
        if cfg.state_period_ns == 0 {
            return Err(TwinError::Config("state period must be non-zero".into()));
        }
        if cfg.max_pose_age_ns == 0 {
            return Err(TwinError::Config("pose age limit must be non-zero".into()));
        }
        if cfg.calibration_buffer == 0 {
            return Err(TwinError::Config(
                "calibration buffer must hold at least one scan".into(),
            ));
        }
        let grid = ReconstructionGrid::new(
            cfg.grid.origin_x,
            cfg.grid.origin_y,
            cfg.grid.cell_size_m,
            cfg.grid.cells_x,
            cfg.grid.cells_y,
        )?;
        let coverage = CoverageMap::new(
            cfg.grid.origin_x,
            cfg.grid.origin_y,
            cfg.grid.cell_size_m,
            cfg.grid.cells_x,
            cfg.grid.cells_y,
            cfg.footprint_length_m,
            cfg.footprint_width_m,
        )?;
        let heap_cells = grid.region_cells(&cfg.heap_region);
        let sensors = bus.subscribe(TOPIC_SENSORS)?;
        let commands = bus.subscribe(TOPIC_COMMAND)?;
        bus.register_payload_kind(measure::kind::TWIN_STATE);
        bus.register_payload_kind(measure::kind::TWIN_CALIBRATION);
        let state_pub = bus.publisher(TOPIC_STATE, measure::kind::TWIN_STATE)?;
        let calib_pub = bus.publisher(TOPIC_CALIBRATION, measure::kind::TWIN_CALIBRATION)?;
        let fuser = PoseFuser::new(cfg.origin, cfg.fuser.clone());
        let lidar_calibration = SensorCalibration::nominal(cfg.lidar_mount);
        let next_state_at = Timestamp::from_nanos(cfg.state_period_ns);
        Ok(Twin {
            cfg,
            sensors,
            commands,
            state_pub,
            calib_pub,
            fuser,
            grid,
            coverage,
            heap_cells,
            lidar_calibration,
            calib_buf: VecDeque::new(),
            diagnostics: TwinDiagnostics::default(),
            next_state_at,
            last_state: None,
        })
    }

    /// One scheduler step: drain measurements, apply commands, advance the
    /// pose filter to `now`, update coverage, and emit any due snapshots.
    pub fn on_tick(&mut self, now: Timestamp) -> Result<(), TwinError> {
        for env in self.sensors.drain() {
            self.handle_sensor(&env);
        }
        self.fuser.advance_to(now);
        for env in self.commands.drain() {
            self.handle_command(&env, now)?;
        }
        if let Some(pose) = self.fuser.estimate() {
            self.coverage.update(pose.position.x, pose.position.y, pose.yaw);
        }
        while self.next_state_at <= now {
            let at = self.next_state_at;
            self.publish_state(at)?;
            self.next_state_at = Timestamp::from_nanos(at.as_nanos() + self.cfg.state_period_ns);
        }
        Ok(())
    }

    fn handle_sensor(&mut self, env: &Envelope) {
        match env.payload_kind.as_str() {
            measure::kind::GPS_FIX => match GpsFix::from_payload(&env.payload) {
                Ok(fix) => {
                    if fix.quality == 1 {
                        self.diagnostics.fixes_accepted += 1;
                    } else {
                        self.diagnostics.fixes_rejected += 1;
                    }
                    if self.fuser.on_gps(&fix).is_err() {
                        self.diagnostics.decode_errors += 1;
                    }
                }
                Err(_) => self.diagnostics.decode_errors += 1,
            },
            measure::kind::IMU_SAMPLE => match ImuSample::from_payload(&env.payload) {
                Ok(sample) => {
                    self.diagnostics.imu_samples += 1;
                    self.fuser.on_imu(&sample);
                }
                Err(_) => self.diagnostics.decode_errors += 1,
            },
            measure::kind::LIDAR_SCAN => match LidarScan::from_payload(&env.payload) {
                Ok(scan) => self.handle_scan(scan),
                Err(_) => self.diagnostics.decode_errors += 1,
            },
            _ => self.diagnostics.decode_errors += 1,
        }
    }

    fn handle_scan(&mut self, scan: LidarScan) {
        let Some(pose) = self.fuser.estimate() else {
            // No pose at all yet: indistinguishable from an infinitely
            // stale one, so it shares the stale-drop diagnostic.
            self.diagnostics.scans_dropped_stale += 1;
            return;
        };
        match ingest_scan(
            &scan,
            &pose,
            &self.lidar_calibration.transform(),
            self.cfg.max_pose_age_ns,
        ) {
            Ok(points) => {
                self.grid.add_points(&points);
                self.diagnostics.scans_ingested += 1;
                if self.calib_buf.len() == self.cfg.calibration_buffer {
                    self.calib_buf.pop_front();
                }
                self.calib_buf.push_back((scan, pose));
            }
            Err(TwinError::StalePose { .. }) => self.diagnostics.scans_dropped_stale += 1,
            Err(_) => self.diagnostics.decode_errors += 1,
        }
    }

    fn handle_command(&mut self, env: &Envelope, now: Timestamp) -> Result<(), TwinError> {
        let cmd = std::str::from_utf8(&env.payload).unwrap_or("").trim();
        match cmd {
            COMMAND_CALIBRATE => {
                self.diagnostics.commands_ok += 1;
                self.run_calibration(now)?;
            }
            COMMAND_RESET => {
                self.diagnostics.commands_ok += 1;
                self.reset();
            }
            _ => self.diagnostics.commands_unknown += 1,
        }
        Ok(())
    }

    fn run_calibration(&mut self, now: Timestamp) -> Result<(), TwinError> {
        let nominal = self.cfg.lidar_mount;
        let scans_used = self.calib_buf.len() as u32;
        let report = match &self.cfg.calibration {
            None => CalibrationReport {
                t: now,
                ok: false,
                roll_rad: nominal.roll,
                pitch_rad: nominal.pitch,
                yaw_rad: nominal.yaw,
                residual_rms_m: 0.0,
                scans_used,
                message: "no calibration reference configured".to_string(),
            },
            Some(reference) => {
                let observations: Vec<(LidarScan, PoseEstimate)> =
                    self.calib_buf.iter().cloned().collect();
                match calibrate_mount(&observations, &nominal, reference) {
                    Ok(cal) => {
                        self.lidar_calibration = cal;
                        CalibrationReport {
                            t: now,
                            ok: true,
                            roll_rad: cal.mount.roll,
                            pitch_rad: cal.mount.pitch,
                            yaw_rad: cal.mount.yaw,
                            residual_rms_m: cal.residual_rms_m,
                            scans_used,
                            message: String::new(),
                        }
                    }
                    Err(err) => CalibrationReport {
                        t: now,
                        ok: false,
                        roll_rad: nominal.roll,
                        pitch_rad: nominal.pitch,
                        yaw_rad: nominal.yaw,
                        residual_rms_m: 0.0,
                        scans_used,
                        message: err.to_string(),
                    },
                }
            }
        };
        self.calib_pub.publish_at(now, report.to_payload())?;
        Ok(())
    }

    fn reset(&mut self) {
        self.grid.clear();
        self.coverage.clear();
        self.fuser = PoseFuser::new(self.cfg.origin, self.cfg.fuser.clone());
        self.lidar_calibration = SensorCalibration::nominal(self.cfg.lidar_mount);
        self.calib_buf.clear();
        self.last_state = None;
    }

    fn publish_state(&mut self, at: Timestamp) -> Result<(), TwinError> {
        let (volume_m3, observed_fraction) = estimate_volume(&self.grid, &self.heap_cells);
        let (w, h) = self.coverage.dims();
        let state = TwinState {
            t: at,
            pose: self.fuser.estimate(),
            volume_m3,
            observed_fraction,
            coverage_width: w as u32,
            coverage_height: h as u32,
            coverage_counts: self.coverage.counts_row_major(),
        };
        state.validate()?;
        self.state_pub.publish_at(at, state.to_payload())?;
        self.diagnostics.states_published += 1;
        self.last_state = Some(state);
        Ok(())
    }

    // ---- Read-side accessors --------------------------------------------

    pub fn config(&self) -> &TwinConfig {
        &self.cfg
    }

    pub fn pose(&self) -> Option<PoseEstimate> {
        self.fuser.estimate()
    }

    pub fn degraded(&self) -> bool {
        self.fuser.degraded()
    }

    pub fn grid(&self) -> &ReconstructionGrid {
        &self.grid
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    pub fn last_state(&self) -> Option<&TwinState> {
        self.last_state.as_ref()
    }

    /// Current estimate of volume and observed fraction over the heap region.
    pub fn volume_estimate(&self) -> (f64, f64) {
        estimate_volume(&self.grid, &self.heap_cells)
    }

    pub fn lidar_calibration(&self) -> &SensorCalibration {
        &self.lidar_calibration
    }

    /// Rig-wide calibration view: antenna and inertial mounts carry their
    /// configured poses; the ranging mount reflects the latest calibration.
    pub fn mount_calibration(&self) -> MountCalibration {
        let gps_pose = Pose3D::new(self.cfg.fuser.gps_mount, 0.0, 0.0, 0.0);
        MountCalibration {
            gps: SensorCalibration::nominal(gps_pose),
            imu: SensorCalibration::nominal(self.cfg.imu_mount),
            lidar: self.lidar_calibration,
        }
    }

    pub fn diagnostics(&self) -> TwinDiagnostics {
        let mut d = self.diagnostics;
        d.points_out_of_bounds = self.grid.out_of_bounds();
        d
    }
}
