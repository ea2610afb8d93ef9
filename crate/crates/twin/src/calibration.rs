//! Automatic mount-angle calibration from scans of a known reference.
//!
//! The reference is a flat strip of ground (z = `flat_z_m`) containing one
//! straight, low ridge of known location that runs across the drive line;
//! the vehicle drives straight over the ridge in both directions ("out" and
//! "back"). Each mount angle then has its own first-order observable:
//!
//! * **roll** — re-projected flat-ground points of a single scan all share
//!   one height exactly when the candidate roll is right (any roll error
//!   tilts the fan and spreads them), so roll is found by minimizing the
//!   summed within-scan height variance;
//! * **pitch** — a pitched fan looks ahead/behind by h̃·tan(θ), so the ridge
//!   appears displaced along-track by +h̃·tan(θ) on the out pass and
//!   −h̃·tan(θ) on the back pass (h̃ = sensor height above the ridge top);
//!   half the separation of the two apparent ridge centers gives θ;
//! * **yaw** — a yawed fan reaches laterally *and* along-track: a beam whose
//!   hit sits a lateral distance d from the sensor lands d·tan(ψ) off
//!   along-track, so regressing apparent ridge position on lateral offset
//!   gives the slope sin(ψ) on both passes.
//!
//! Only the three mount angles are estimated; the mount translation is taken
//! from configuration. After fitting, the flat-strip residual RMS is
//! reported and must stay under the reference threshold.

use dtp_core::measure::LidarScan;
use dtp_core::pose::{Pose3D, RigidTransform, Vec3};

use crate::fusion::PoseEstimate;
use crate::ingest::ingest_scan;
use crate::TwinError;

/// Scans are used only while the vehicle drives straight along the
/// calibration axis (heading within this of 0 or pi).
const STRAIGHT_YAW_TOL_RAD: f64 = 0.035;
/// Flat-strip points must sit at least this far outside the ridge footprint.
const FLAT_EXCLUSION_MARGIN_M: f64 = 1.0;
/// Ridge points are collected within this margin around the ridge footprint.
const RIDGE_CAPTURE_MARGIN_M: f64 = 0.5;
/// Minimum ridge returns per pass for pitch/yaw to be observable.
const MIN_RIDGE_POINTS: usize = 50;
/// Minimum flat returns for a scan to contribute to the roll cost.
const MIN_FLAT_POINTS_PER_SCAN: usize = 8;
/// Roll search bracket (radians) and termination width.
const ROLL_SEARCH_RAD: f64 = 0.2;
const ROLL_TOL_RAD: f64 = 1e-6;

/// One sensor's estimated mount pose plus the goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorCalibration {
    pub mount: Pose3D,
    pub residual_rms_m: f64,
}

impl SensorCalibration {
    /// The configured mount taken at face value (residual zero).
    pub fn nominal(mount: Pose3D) -> Self {
        SensorCalibration {
            mount,
            residual_rms_m: 0.0,
        }
    }

    pub fn transform(&self) -> RigidTransform {
        self.mount.transform()
    }
}

/// Mount estimates for the full sensor rig. The ranging sensor is the one
/// refined by `calibrate_mount`; antenna and inertial mounts carry their
/// configured values (angular errors there are absorbed by the pose filter's
/// own corrections).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountCalibration {
    pub gps: SensorCalibration,
    pub imu: SensorCalibration,
    pub lidar: SensorCalibration,
}

/// Geometry of the known calibration reference, in world coordinates. The
/// ridge must run across the drive line (constant-x band) and span the whole
/// lateral reach of the fan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReference {
    /// Height of the flat reference strip.
    pub flat_z_m: f64,
    /// Along-track extent of the reference ridge.
    pub ridge_x0_m: f64,
    pub ridge_x1_m: f64,
    /// Ridge top height above the flat strip.
    pub ridge_height_m: f64,
    /// Straight-segment scans required before calibration is attempted.
    pub min_scans: usize,
    /// Flat-strip residual RMS above this fails the calibration.
    pub max_residual_m: f64,
}

impl CalibrationReference {
    pub fn new(ridge_x0_m: f64, ridge_x1_m: f64, ridge_height_m: f64) -> Self {
        CalibrationReference {
            flat_z_m: 0.0,
            ridge_x0_m,
            ridge_x1_m,
            ridge_height_m,
            min_scans: 30,
            max_residual_m: 0.02,
        }
    }
}

/// Direction of a straight calibration pass.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pass {
    Out,
    Back,
}

fn pass_of(pose: &PoseEstimate) -> Option<Pass> {
    let c = pose.yaw.cos();
    if c > (STRAIGHT_YAW_TOL_RAD).cos() {
        Some(Pass::Out)
    } else if c < -(STRAIGHT_YAW_TOL_RAD).cos() {
        Some(Pass::Back)
    } else {
        None
    }
}

/// Least-squares line fit y = a + b·x; returns (a, b).
fn line_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return (sy / n.max(1.0), 0.0);
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}

/// Golden-section minimizer for a unimodal function on [a, b].
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

struct Reprojection {
    /// World point, pass direction, sensor world position at scan time.
    points: Vec<(Vec3, Pass, Vec3)>,
}

fn reproject(
    observations: &[(LidarScan, PoseEstimate)],
    mount: &Pose3D,
) -> Result<Reprojection, TwinError> {
    let xf = mount.transform();
    let mut points = Vec::new();
    for (scan, pose) in observations {
        let Some(pass) = pass_of(pose) else {
            continue;
        };
        let vehicle = Pose3D::new(pose.position, 0.0, 0.0, pose.yaw).transform();
        let sensor = vehicle.transform_point(xf.translation);
        for p in ingest_scan(scan, pose, &xf, u64::MAX)? {
            points.push((p, pass, sensor));
        }
    }
    Ok(Reprojection { points })
}

fn is_flat_zone(reference: &CalibrationReference, x: f64) -> bool {
    x < reference.ridge_x0_m - FLAT_EXCLUSION_MARGIN_M
        || x > reference.ridge_x1_m + FLAT_EXCLUSION_MARGIN_M
}

fn is_ridge_zone(reference: &CalibrationReference, x: f64, z: f64) -> bool {
    x >= reference.ridge_x0_m - RIDGE_CAPTURE_MARGIN_M
        && x <= reference.ridge_x1_m + RIDGE_CAPTURE_MARGIN_M
        && z > reference.flat_z_m + reference.ridge_height_m / 2.0
}

/// Summed within-scan variance of flat-strip heights for a candidate roll.
fn roll_cost(
    observations: &[(LidarScan, PoseEstimate)],
    nominal: &Pose3D,
    reference: &CalibrationReference,
    roll: f64,
) -> f64 {
    let mount = Pose3D::new(nominal.position, roll, nominal.pitch, nominal.yaw);
    let xf = mount.transform();
    let mut cost = 0.0;
    for (scan, pose) in observations {
        if pass_of(pose).is_none() {
            continue;
        }
        let Ok(points) = ingest_scan(scan, pose, &xf, u64::MAX) else {
            continue;
        };
        let flat: Vec<f64> = points
            .iter()
            .filter(|p| is_flat_zone(reference, p.x))
            .map(|p| p.z)
            .collect();
        if flat.len() < MIN_FLAT_POINTS_PER_SCAN {
            continue;
        }
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        cost += flat.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>();
    }
    cost
}

/// Estimates the ranging sensor's mount angles from straight passes over the
/// calibration reference. See the module docs for the per-angle observables.
pub fn calibrate_mount(
    observations: &[(LidarScan, PoseEstimate)],
    nominal_mount: &Pose3D,
    reference: &CalibrationReference,
) -> Result<SensorCalibration, TwinError> {
    let straight = observations
        .iter()
        .filter(|(_, pose)| pass_of(pose).is_some())
        .count();
    if straight < reference.min_scans {
        return Err(TwinError::InsufficientScans {
            got: straight,
            need: reference.min_scans,
        });
    }

    // Roll: flatten the flat strip.
    let roll = golden_min(
        |r| roll_cost(observations, nominal_mount, reference, r),
        -ROLL_SEARCH_RAD,
        ROLL_SEARCH_RAD,
        ROLL_TOL_RAD,
    );

    // Pitch and yaw from the ridge, with roll corrected.
    let rolled = Pose3D::new(
        nominal_mount.position,
        roll,
        nominal_mount.pitch,
        nominal_mount.yaw,
    );
    let projected = reproject(observations, &rolled)?;
    let mut fits: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut height_sum = 0.0;
    for &(p, pass, sensor) in &projected.points {
        if !is_ridge_zone(reference, p.x, p.z) {
            continue;
        }
        let idx = match pass {
            Pass::Out => 0,
            Pass::Back => 1,
        };
        // Regress apparent along-track position on world lateral offset.
        fits[idx].push((p.y - sensor.y, p.x));
        height_sum += sensor.z - p.z;
    }
    for (idx, direction) in [(0, "out"), (1, "back")] {
        if fits[idx].len() < MIN_RIDGE_POINTS {
            return Err(TwinError::NoRidgeDetections { direction });
        }
    }
    let n_ridge = (fits[0].len() + fits[1].len()) as f64;
    let clearance = height_sum / n_ridge; // h̃: sensor height above ridge top
    let (intercept_out, slope_out) = line_fit(&fits[0]);
    let (intercept_back, slope_back) = line_fit(&fits[1]);
    let pitch = ((intercept_out - intercept_back) / (2.0 * clearance)).atan();
    let yaw = ((slope_out + slope_back) / 2.0).clamp(-0.5, 0.5).asin();

    // Residual of the flat strip under the final mount.
    let mount = Pose3D::new(nominal_mount.position, roll, pitch, yaw);
    let fitted = reproject(observations, &mount)?;
    let mut sq_sum = 0.0;
    let mut n_flat = 0usize;
    for &(p, _, _) in &fitted.points {
        if is_flat_zone(reference, p.x) {
            let dz = p.z - reference.flat_z_m;
            sq_sum += dz * dz;
            n_flat += 1;
        }
    }
    if n_flat == 0 {
        return Err(TwinError::NoRidgeDetections { direction: "flat" });
    }
    let residual_rms_m = (sq_sum / n_flat as f64).sqrt();
    if residual_rms_m > reference.max_residual_m {
        return Err(TwinError::NonFlat {
            residual_m: residual_rms_m,
            limit_m: reference.max_residual_m,
        });
    }
    Ok(SensorCalibration {
        mount,
        residual_rms_m,
    })
}
