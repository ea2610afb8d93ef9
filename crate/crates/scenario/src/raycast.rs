//! Ray casting of LiDAR beams against the heightfield.
//!
//! A beam at fan angle φ points along (0, sin φ, −cos φ) in the sensor frame:
//! φ = 0 is straight down, positive φ sweeps toward +y (across-track fan).
//! The caster marches along the ray in steps of at most a quarter cell and
//! refines any surface crossing by bisection to better than a millimeter.
//! A beam that exhausts `max_range` without a hit reports the sentinel value
//! `max_range + 1.0` (encoded as 0 on the wire by the emulator).

use dtp_core::pose::{RigidTransform, Vec3};
use thiserror::Error;

use crate::heightfield::HeightField;

/// Bisection stops when the bracketing interval is this short (meters); an
/// order of magnitude finer than the 1 mm wire resolution.
const REFINE_TOL_M: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum RaycastError {
    #[error("sensor at ({x:.3}, {y:.3}, {z:.3}) is at or below terrain height {terrain:.3}")]
    SensorBelowTerrain { x: f64, y: f64, z: f64, terrain: f64 },
    #[error("max range must be positive and finite, got {0}")]
    BadMaxRange(f64),
}

/// Beam direction in the sensor frame for fan angle `phi` (radians).
#[inline]
pub fn beam_direction(phi: f64) -> Vec3 {
    Vec3::new(0.0, phi.sin(), -phi.cos())
}

/// Casts a single ray from `origin` along unit `dir`, returning the hit range
/// in meters or `max_range + 1.0` when nothing is struck.
pub fn raycast(
    field: &HeightField,
    origin: Vec3,
    dir: Vec3,
    max_range: f64,
) -> Result<f64, RaycastError> {
    if !(max_range > 0.0) || !max_range.is_finite() {
        return Err(RaycastError::BadMaxRange(max_range));
    }
    let ground0 = field.height_at(origin.x, origin.y);
    if origin.z <= ground0 {
        return Err(RaycastError::SensorBelowTerrain {
            x: origin.x,
            y: origin.y,
            z: origin.z,
            terrain: ground0,
        });
    }
    let step = field.cell_size() / 4.0;
    let clearance = |t: f64| -> f64 {
        let p = origin + dir * t;
        p.z - field.height_at(p.x, p.y)
    };
    let ceiling = field.max_height();
    let mut t_prev = 0.0;
    let mut t = step.min(max_range);
    loop {
        let p = origin + dir * t;
        // A non-descending ray already above every surface can never hit.
        if dir.z >= 0.0 && p.z > ceiling {
            return Ok(max_range + 1.0);
        }
        if p.z - field.height_at(p.x, p.y) <= 0.0 {
            // Bracketed a crossing in (t_prev, t]; bisect it down.
            let mut lo = t_prev;
            let mut hi = t;
            while hi - lo > REFINE_TOL_M {
                let mid = 0.5 * (lo + hi);
                if clearance(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        if t >= max_range {
            return Ok(max_range + 1.0);
        }
        t_prev = t;
        t = (t + step).min(max_range);
    }
}

/// Fan-scan geometry in the exact integer microradian units the wire carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGeometry {
    pub start_angle_urad: i32,
    pub angle_increment_urad: u32,
    pub beam_count: u16,
    pub max_range_m: f64,
}

impl ScanGeometry {
    /// A symmetric fan of `beam_count` beams spanning ±`half_span_urad`.
    pub fn symmetric(half_span_urad: u32, beam_count: u16, max_range_m: f64) -> Self {
        assert!(beam_count >= 2);
        let incr = 2 * half_span_urad / (beam_count as u32 - 1);
        ScanGeometry {
            start_angle_urad: -(half_span_urad as i32),
            angle_increment_urad: incr,
            beam_count,
            max_range_m,
        }
    }

    #[inline]
    pub fn beam_angle_rad(&self, i: usize) -> f64 {
        (self.start_angle_urad as f64 + i as f64 * self.angle_increment_urad as f64) * 1e-6
    }
}

/// Casts every beam of a scan. `sensor_to_world` maps sensor-frame points and
/// directions into the world (its translation is the optical center).
pub fn raycast_scan(
    field: &HeightField,
    sensor_to_world: &RigidTransform,
    geom: &ScanGeometry,
) -> Result<Vec<f64>, RaycastError> {
    let origin = sensor_to_world.transform_point(Vec3::new(0.0, 0.0, 0.0));
    let mut out = Vec::with_capacity(geom.beam_count as usize);
    for i in 0..geom.beam_count as usize {
        let dir = sensor_to_world.rotate_vector(beam_direction(geom.beam_angle_rad(i)));
        out.push(raycast(field, origin, dir, geom.max_range_m)?);
    }
    Ok(out)
}
