//! Shared domain types: events, camera model, poses and twists.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// One asynchronous brightness-change detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Timestamp in seconds.
    pub t: f64,
    /// Pixel column.
    pub x: u32,
    /// Pixel row.
    pub y: u32,
    /// +1 or -1.
    pub polarity: i8,
}

/// Pinhole camera intrinsics, no distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::BadIntrinsics(format!("fx={fx}, fy={fy} must be > 0")));
        }
        if cx <= 0.0 || cx >= width as f64 || cy <= 0.0 || cy >= height as f64 {
            return Err(GeometryError::BadIntrinsics(format!(
                "principal point ({cx},{cy}) outside sensor {width}x{height}"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }
}

/// Pinhole projection of a camera-frame point to pixel coordinates.
pub fn project(point: &Vector3<f64>, k: &CameraIntrinsics) -> Result<(f64, f64), GeometryError> {
    if point.z <= 0.0 {
        return Err(GeometryError::BehindCamera(point.z));
    }
    Ok((k.fx * point.x / point.z + k.cx, k.fy * point.y / point.z + k.cy))
}

/// Back-project pixel (u, v) at depth z to a camera-frame point.
pub fn unproject(u: f64, v: f64, z: f64, k: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z)
}

/// Rigid transform, object frame expressed in camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    /// Unit quaternion; (w, x, y, z) ordering in all file formats.
    pub rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation }
    }

    /// Build from raw (w, x, y, z) components, renormalizing.
    pub fn from_parts(translation: Vector3<f64>, w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Self { translation, rotation: q }
    }

    /// Map an object-frame point into the camera frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.inverse();
        Self { translation: -(rot_inv * self.translation), rotation: rot_inv }
    }

    /// Quaternion components in (w, x, y, z) order.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// Rigid-transform composition a∘b (apply b first), quaternion renormalized.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let rotation = UnitQuaternion::from_quaternion(
        (a.rotation.quaternion() * b.rotation.quaternion()).normalize().into(),
    );
    Pose { translation: a.rotation * b.translation + a.translation, rotation }
}

/// Angle of the relative rotation a⁻¹b, in degrees, in [0, 180].
/// Quaternion double cover is handled: q and -q compare equal.
pub fn rotation_angle_between(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation.inverse() * b.rotation;
    let w = rel.quaternion().w.abs().min(1.0);
    (2.0 * w.acos()).to_degrees()
}

/// 6D object velocity.
///
/// Convention: `v` is the linear velocity of the object origin and `omega`
/// the angular velocity of the body about that origin, both expressed in
/// camera-frame coordinates. A rigidly attached point at lever arm r from
/// the object origin moves with v + omega × r; the origin itself moves
/// with v alone, so pose translation integrates independently of omega.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self { v: Vector3::zeros(), omega: Vector3::zeros() }
    }

    pub fn new(v: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self { v, omega }
    }

    /// Velocity of the body point at lever arm `r` from the object origin
    /// (camera-frame coordinates).
    pub fn point_velocity(&self, r: &Vector3<f64>) -> Vector3<f64> {
        self.v + self.omega.cross(r)
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.omega.iter()).all(|c| c.is_finite())
    }
}

/// Pose with a timestamp; trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}
