//! Poses and rigid transforms in the ENU world frame.
//!
//! Orientation is expressed as intrinsic yaw → pitch → roll Euler angles,
//! i.e. the rotation matrix is `R = Rz(yaw) * Ry(pitch) * Rx(roll)`. Frames
//! are right-handed with x forward, y left, z up; yaw is measured about +z
//! (counter-clockwise from +x when viewed from above). All angles are radians
//! normalized to the half-open interval (-pi, pi].

use std::ops::{Add, Mul, Neg, Sub};

/// 3-vector in metres (or unitless for directions).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            Vec3::ZERO
        } else {
            self * (1.0 / n)
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = a.rem_euclid(two_pi); // [0, 2*pi)
    if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Position plus intrinsic yaw/pitch/roll orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3D {
    pub position: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Default for Pose3D {
    fn default() -> Self {
        Pose3D::IDENTITY
    }
}

impl Pose3D {
    pub const IDENTITY: Pose3D = Pose3D {
        position: Vec3::ZERO,
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
    };

    pub fn new(position: Vec3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Pose3D {
            position,
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_pose(self)
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.transform().transform_point(p)
    }

    /// Pose of `child` (given relative to this pose) in this pose's parent
    /// frame.
    pub fn compose(&self, child: &Pose3D) -> Pose3D {
        self.transform().compose(&child.transform()).to_pose()
    }

    pub fn inverse(&self) -> Pose3D {
        self.transform().inverse().to_pose()
    }
}

/// Rotation matrix plus translation; the workhorse form for chained frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: Vec3::ZERO,
    };

    pub fn from_pose(pose: &Pose3D) -> Self {
        let (sr, cr) = pose.roll.sin_cos();
        let (sp, cp) = pose.pitch.sin_cos();
        let (sy, cy) = pose.yaw.sin_cos();
        // Rz(yaw) * Ry(pitch) * Rx(roll), expanded.
        let rotation = [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ];
        RigidTransform {
            rotation,
            translation: pose.position,
        }
    }

    /// Recovers yaw/pitch/roll. At the pitch = +-pi/2 singularity roll is
    /// folded into yaw and reported as zero.
    pub fn to_pose(&self) -> Pose3D {
        let r = &self.rotation;
        let sp = -r[2][0];
        if sp.abs() > 1.0 - 1e-12 {
            let pitch = if sp > 0.0 {
                std::f64::consts::FRAC_PI_2
            } else {
                -std::f64::consts::FRAC_PI_2
            };
            // r[0][1] = -sin(yaw -/+ roll), r[1][1] = cos(yaw -/+ roll)
            let yaw = (-r[0][1]).atan2(r[1][1]);
            return Pose3D::new(self.translation, 0.0, pitch, yaw);
        }
        let pitch = sp.asin();
        let roll = r[2][1].atan2(r[2][2]);
        let yaw = r[1][0].atan2(r[0][0]);
        Pose3D::new(self.translation, roll, pitch, yaw)
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3 {
            x: r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + self.translation.x,
            y: r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + self.translation.y,
            z: r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + self.translation.z,
        }
    }

    /// Rotates a direction without translating it.
    pub fn rotate_vector(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3 {
            x: r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            y: r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            z: r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        }
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        RigidTransform {
            rotation,
            translation: self.transform_point(other.translation),
        }
    }

    /// Rotation matrices invert by transpose.
    pub fn inverse(&self) -> RigidTransform {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.translation;
        let translation = Vec3 {
            x: -(rt[0][0] * t.x + rt[0][1] * t.y + rt[0][2] * t.z),
            y: -(rt[1][0] * t.x + rt[1][1] * t.y + rt[1][2] * t.z),
            z: -(rt[2][0] * t.x + rt[2][1] * t.y + rt[2][2] * t.z),
        };
        RigidTransform {
            rotation: rt,
            translation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // ---- Independent oracle: 4x4 homogeneous matrices built from scratch ----

    type Mat4 = [[f64; 4]; 4];

    fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for (k, bk) in b.iter().enumerate() {
                    out[i][j] += a[i][k] * bk[j];
                }
            }
        }
        out
    }

    fn mat4_rx(a: f64) -> Mat4 {
        let (s, c) = a.sin_cos();
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, 0.0],
            [0.0, s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    fn mat4_ry(a: f64) -> Mat4 {
        let (s, c) = a.sin_cos();
        [
            [c, 0.0, s, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [-s, 0.0, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    fn mat4_rz(a: f64) -> Mat4 {
        let (s, c) = a.sin_cos();
        [
            [c, -s, 0.0, 0.0],
            [s, c, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    fn mat4_from_pose(p: &Pose3D) -> Mat4 {
        let mut m = mat4_mul(&mat4_mul(&mat4_rz(p.yaw), &mat4_ry(p.pitch)), &mat4_rx(p.roll));
        m[0][3] = p.position.x;
        m[1][3] = p.position.y;
        m[2][3] = p.position.z;
        m
    }

    fn mat4_apply(m: &Mat4, p: Vec3) -> Vec3 {
        Vec3 {
            x: m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
            y: m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
            z: m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
        }
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn yaw_quarter_turn_sends_x_to_y() {
        let p = Pose3D::new(Vec3::ZERO, 0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let out = p.transform_point(Vec3::new(1.0, 0.0, 0.0));
        assert!(close(out, Vec3::new(0.0, 1.0, 0.0), 1e-12));
    }

    #[test]
    fn pitch_quarter_turn_sends_x_down() {
        // Positive pitch (nose up) about +y sends +x toward -z.
        let p = Pose3D::new(Vec3::ZERO, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let out = p.transform_point(Vec3::new(1.0, 0.0, 0.0));
        assert!(close(out, Vec3::new(0.0, 0.0, -1.0), 1e-12));
    }

    #[test]
    fn roll_quarter_turn_sends_y_to_z() {
        let p = Pose3D::new(Vec3::ZERO, std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let out = p.transform_point(Vec3::new(0.0, 1.0, 0.0));
        assert!(close(out, Vec3::new(0.0, 0.0, 1.0), 1e-12));
    }

    #[test]
    fn matches_homogeneous_matrix_oracle_on_fixed_cases() {
        let cases = [
            Pose3D::new(Vec3::new(1.0, 2.0, 3.0), 0.1, -0.2, 0.3),
            Pose3D::new(Vec3::new(-4.0, 0.5, 2.0), 1.0, 0.7, -2.5),
            Pose3D::new(Vec3::ZERO, -3.0, 1.2, 3.1),
        ];
        let probes = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(-2.0, 5.0, 0.25),
        ];
        for pose in &cases {
            let m = mat4_from_pose(pose);
            for &probe in &probes {
                assert!(close(pose.transform_point(probe), mat4_apply(&m, probe), 1e-12));
            }
        }
    }

    #[test]
    fn compose_matches_matrix_product_oracle() {
        let a = Pose3D::new(Vec3::new(1.0, -2.0, 0.5), 0.2, 0.3, -0.9);
        let b = Pose3D::new(Vec3::new(-0.4, 3.0, 1.5), -0.6, 0.1, 2.2);
        let ab = a.compose(&b);
        let m = mat4_mul(&mat4_from_pose(&a), &mat4_from_pose(&b));
        for &probe in &[Vec3::new(1.0, 2.0, 3.0), Vec3::new(-5.0, 0.0, 0.1)] {
            assert!(close(ab.transform_point(probe), mat4_apply(&m, probe), 1e-9));
        }
    }

    #[test]
    fn angle_normalization_boundaries() {
        use std::f64::consts::PI;
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(2.0 * PI)).abs() < 1e-12);
        assert!((normalize_angle(-0.1) + 0.1).abs() < 1e-12);
        let p = Pose3D::new(Vec3::ZERO, 0.0, 0.0, 4.0 * PI + 0.25);
        assert!((p.yaw - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gimbal_lock_round_trip_preserves_rotation() {
        let p = Pose3D::new(Vec3::ZERO, 0.4, std::f64::consts::FRAC_PI_2, 1.1);
        let again = p.transform().to_pose();
        // Angles differ (roll folded into yaw) but the rotation must agree.
        for &probe in &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.7, 2.0)] {
            assert!(close(p.transform_point(probe), again.transform_point(probe), 1e-9));
        }
    }

    fn pose_strategy() -> impl Strategy<Value = Pose3D> {
        use std::f64::consts::PI;
        (
            -100.0f64..100.0,
            -100.0f64..100.0,
            -100.0f64..100.0,
            -PI..PI,
            // Stay away from the asin() gimbal zone so Euler angles are unique.
            -1.4f64..1.4,
            -PI..PI,
        )
            .prop_map(|(x, y, z, roll, pitch, yaw)| {
                Pose3D::new(Vec3::new(x, y, z), roll, pitch, yaw)
            })
    }

    proptest! {
        #[test]
        fn prop_transform_matches_matrix_oracle(pose in pose_strategy(),
                                                px in -50.0f64..50.0,
                                                py in -50.0f64..50.0,
                                                pz in -50.0f64..50.0) {
            let m = mat4_from_pose(&pose);
            let p = Vec3::new(px, py, pz);
            prop_assert!(close(pose.transform_point(p), mat4_apply(&m, p), 1e-9));
        }

        #[test]
        fn prop_inverse_round_trips_points(pose in pose_strategy(),
                                           px in -50.0f64..50.0,
                                           py in -50.0f64..50.0,
                                           pz in -50.0f64..50.0) {
            let p = Vec3::new(px, py, pz);
            let inv = pose.transform().inverse();
            let back = inv.transform_point(pose.transform_point(p));
            prop_assert!(close(back, p, 1e-8));
        }

        #[test]
        fn prop_euler_extraction_round_trips(pose in pose_strategy()) {
            let again = pose.transform().to_pose();
            prop_assert!((again.roll - pose.roll).abs() < 1e-9);
            prop_assert!((again.pitch - pose.pitch).abs() < 1e-9);
            prop_assert!((again.yaw - pose.yaw).abs() < 1e-9);
        }

        #[test]
        fn prop_compose_with_inverse_is_identity(pose in pose_strategy()) {
            let t = pose.transform();
            let id = t.compose(&t.inverse());
            let p = Vec3::new(3.0, -1.0, 2.0);
            prop_assert!(close(id.transform_point(p), p, 1e-8));
        }
    }
}
