//! Kinematic bicycle model of the tractor plus a simple waypoint follower.
//!
//! The pose position is the rear axle center; x forward, yaw about +z. The
//! step law is the textbook forward-Euler bicycle:
//!
//! ```text
//! x += v·cos(θ)·dt    y += v·sin(θ)·dt    θ += (v/L)·tan(δ)·dt
//! ```
//!
//! using the pre-update heading for the position update. Commanded speed and
//! steering take effect instantly in `step`; rate limits belong to the
//! controller that produces the commands, not to the model.

use dtp_core::pose::{normalize_angle, Pose3D, Vec3};

use crate::heightfield::HeightField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractorState {
    /// Rear-axle pose; z follows the terrain under the rear axle.
    pub pose: Pose3D,
    pub speed: f64,
    pub steering_angle: f64,
    pub wheelbase: f64,
    pub footprint_length: f64,
    pub footprint_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Controls {
    pub speed: f64,
    pub steering_angle: f64,
}

impl TractorState {
    pub fn new(x: f64, y: f64, yaw: f64, wheelbase: f64, length: f64, width: f64) -> Self {
        assert!(wheelbase > 0.0, "wheelbase must be positive");
        TractorState {
            pose: Pose3D::new(Vec3::new(x, y, 0.0), 0.0, 0.0, yaw),
            speed: 0.0,
            steering_angle: 0.0,
            wheelbase,
            footprint_length: length,
            footprint_width: width,
        }
    }

    /// Advances one tick under the given controls and re-seats z on terrain.
    pub fn step(&mut self, controls: Controls, dt: f64, terrain: &HeightField) {
        debug_assert!(dt > 0.0);
        let v = controls.speed;
        let delta = controls
            .steering_angle
            .clamp(-std::f64::consts::FRAC_PI_2 + 1e-6, std::f64::consts::FRAC_PI_2 - 1e-6);
        let yaw = self.pose.yaw;
        let x = self.pose.position.x + v * yaw.cos() * dt;
        let y = self.pose.position.y + v * yaw.sin() * dt;
        let new_yaw = normalize_angle(yaw + v / self.wheelbase * delta.tan() * dt);
        let z = terrain.height_at(x, y);
        self.pose = Pose3D::new(Vec3::new(x, y, z), 0.0, 0.0, new_yaw);
        self.speed = v;
        self.steering_angle = delta;
    }

    /// Grid cells whose centers lie under the tractor footprint rectangle
    /// (centered on the rear axle, aligned with the heading).
    pub fn footprint_cells(&self, terrain: &HeightField) -> Vec<(usize, usize)> {
        let half_l = self.footprint_length / 2.0;
        let half_w = self.footprint_width / 2.0;
        let (sin_yaw, cos_yaw) = self.pose.yaw.sin_cos();
        let cx = self.pose.position.x;
        let cy = self.pose.position.y;
        // Conservative world-aligned bounding box, then exact rotated test.
        let reach = half_l.hypot(half_w);
        let cell = terrain.cell_size();
        let mut cells = Vec::new();
        let x_lo = cx - reach - cell;
        let y_lo = cy - reach - cell;
        let steps = ((2.0 * (reach + cell)) / cell).ceil() as usize + 1;
        let mut seen = std::collections::HashSet::new();
        for iy in 0..steps {
            for ix in 0..steps {
                let px = x_lo + (ix as f64 + 0.5) * cell;
                let py = y_lo + (iy as f64 + 0.5) * cell;
                if let Some(c) = terrain.cell_at(px, py) {
                    if !seen.insert(c) {
                        continue;
                    }
                    let (ccx, ccy) = terrain.cell_center(c.0, c.1);
                    let dx = ccx - cx;
                    let dy = ccy - cy;
                    let local_x = dx * cos_yaw + dy * sin_yaw;
                    let local_y = -dx * sin_yaw + dy * cos_yaw;
                    if local_x.abs() <= half_l && local_y.abs() <= half_w {
                        cells.push(c);
                    }
                }
            }
        }
        cells.sort_unstable();
        cells
    }
}

/// Drives the tractor through a waypoint list with proportional steering and
/// slew-limited speed so commanded accelerations stay physical.
#[derive(Debug, Clone)]
pub struct WaypointFollower {
    pub waypoints: Vec<Waypoint>,
    pub next: usize,
    pub max_steer: f64,
    pub steer_gain: f64,
    pub accel_limit: f64,
    pub capture_radius: f64,
    commanded_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

impl WaypointFollower {
    pub fn new(waypoints: Vec<Waypoint>) -> Self {
        WaypointFollower {
            waypoints,
            next: 0,
            max_steer: 0.9,
            steer_gain: 2.0,
            accel_limit: 1.5,
            capture_radius: 0.6,
            commanded_speed: 0.0,
        }
    }

    pub fn finished(&self) -> bool {
        self.next >= self.waypoints.len()
    }

    /// Controls for the current tick. After the last waypoint the tractor
    /// brakes to a stop (still slew-limited).
    pub fn controls(&mut self, state: &TractorState, dt: f64) -> Controls {
        while self.next < self.waypoints.len() {
            let wp = self.waypoints[self.next];
            let dx = wp.x - state.pose.position.x;
            let dy = wp.y - state.pose.position.y;
            if dx.hypot(dy) < self.capture_radius {
                self.next += 1;
            } else {
                break;
            }
        }
        let (target_speed, steer) = if let Some(wp) = self.waypoints.get(self.next) {
            let dx = wp.x - state.pose.position.x;
            let dy = wp.y - state.pose.position.y;
            let heading_err = normalize_angle(dy.atan2(dx) - state.pose.yaw);
            (
                wp.speed,
                (self.steer_gain * heading_err).clamp(-self.max_steer, self.max_steer),
            )
        } else {
            (0.0, 0.0)
        };
        let dv = (target_speed - self.commanded_speed).clamp(
            -self.accel_limit * dt,
            self.accel_limit * dt,
        );
        self.commanded_speed += dv;
        Controls {
            speed: self.commanded_speed,
            steering_angle: steer,
        }
    }
}
