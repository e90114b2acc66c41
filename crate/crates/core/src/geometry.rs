//! Camera model, events, bearings and the line-frame parametrization.
//!
//! All quantities live in the camera frame at the reference time `t_s`. A
//! line is encoded by a right-handed triad `(e1, e2, e3)`: `e1` is the line
//! direction, `-e3` the closest point to the camera center (at unit depth
//! because scale is unobservable) and `-e2` the normalized Plücker moment.
//! Camera velocity along the line is unobservable, so only the two
//! components `(u_y, u_z)` along `e2` and `e3` are carried.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3;

pub type Vec3 = Vector3<f64>;

/// Lines with `|m| / |d|` below this are treated as passing through the origin.
pub const DEFAULT_ORIGIN_EPSILON: f64 = 1e-9;

/// Pinhole intrinsics for undistorted images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 640x480 virtual camera with a 320 px focal length.
    fn default() -> Self {
        Self { fx: 320.0, fy: 320.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        if !(self.cx >= 0.0 && self.cx < w && self.cy >= 0.0 && self.cy < h) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} sensor",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Back-projects a pixel to a unit bearing.
    pub fn pixel_to_bearing(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0).normalize()
    }

    /// Projects a camera-frame direction or point. `None` when it is not in
    /// front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Whether a pixel lies on the sensor, using the `[-0.5, W - 0.5)` pixel-center convention.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= -0.5 && x < f64::from(self.width) - 0.5 && y >= -0.5 && y < f64::from(self.height) - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }
}

/// A single brightness-change event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Timestamp in seconds.
    pub t: f64,
    /// Sub-pixel column.
    pub x: f64,
    /// Sub-pixel row.
    pub y: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: f64, x: f64, y: f64, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

/// Camera-frame angular rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngularRate(pub Vec3);

impl AngularRate {
    /// Camera orientation at `t_rel` relative to the reference frame,
    /// `exp([w]x t_rel)`.
    pub fn rotation_at(&self, t_rel: f64) -> Matrix3<f64> {
        so3::exp(&(self.0 * t_rel))
    }
}

/// Source of camera orientation over time, relative to the reference frame.
pub trait RotationModel {
    /// Rotation taking bearings at `t` into the reference frame at `t_s`.
    fn rotation(&self, t_s: f64, t: f64) -> Matrix3<f64>;
}

impl RotationModel for AngularRate {
    fn rotation(&self, t_s: f64, t: f64) -> Matrix3<f64> {
        self.rotation_at(t - t_s)
    }
}

pub fn rotation_from_angular_rate(w: &AngularRate, t_rel: f64) -> Matrix3<f64> {
    w.rotation_at(t_rel)
}

/// Derotated unit bearing with its time relative to the reference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingObservation {
    pub f: Vec3,
    pub t_rel: f64,
}

impl BearingObservation {
    pub fn new(f: Vec3, t_rel: f64) -> Self {
        Self { f: f.normalize(), t_rel }
    }

    /// Whether the bearing looks forward (`f_z > 0`); informational only.
    pub fn is_forward(&self) -> bool {
        self.f.z > 0.0
    }
}

/// Motion-compensates one event into the reference frame.
pub fn derotate_event(
    e: &Event,
    rotation: &impl RotationModel,
    t_s: f64,
    k: &CameraIntrinsics,
) -> BearingObservation {
    let f = k.pixel_to_bearing(e.x, e.y);
    let r = rotation.rotation(t_s, e.t);
    BearingObservation { f: (r * f).normalize(), t_rel: e.t - t_s }
}

pub fn derotate_events(
    events: &[Event],
    rotation: &impl RotationModel,
    t_s: f64,
    k: &CameraIntrinsics,
) -> Vec<BearingObservation> {
    events.iter().map(|e| derotate_event(e, rotation, t_s, k)).collect()
}

/// Line encoded as an orthonormal triad; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFrame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
}

/// Minimal 3-DoF line parameters, the angle-axis logarithm of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalLineParams(pub Vec3);

impl LineFrame {
    /// Builds a frame from two orthonormal columns, completing with `e1 x e2`.
    pub fn from_axes(e1: Vec3, e2: Vec3) -> Self {
        Self { e1, e2, e3: e1.cross(&e2) }
    }

    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        Self { e1: r.column(0).into_owned(), e2: r.column(1).into_owned(), e3: r.column(2).into_owned() }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.e1, self.e2, self.e3])
    }

    /// Builds the canonical frame of the Plücker line `(d, m)`.
    pub fn from_plucker(d: &Vec3, m: &Vec3) -> Result<Self> {
        Self::from_plucker_with_epsilon(d, m, DEFAULT_ORIGIN_EPSILON)
    }

    pub fn from_plucker_with_epsilon(d: &Vec3, m: &Vec3, eps_origin: f64) -> Result<Self> {
        let dn = d.norm();
        if dn == 0.0 || !dn.is_finite() {
            return Err(Error::ZeroVector);
        }
        let ratio = m.norm() / dn;
        if ratio <= eps_origin {
            return Err(Error::DegenerateLine { ratio });
        }
        let e1 = d / dn;
        // Remove any component of the moment along d before normalizing.
        let m_perp = m - e1 * e1.dot(m);
        let e2 = -m_perp.normalize();
        Ok(Self::from_axes(e1, e2))
    }

    /// Frame and closest-point depth of the line through `p` with direction `d`.
    pub fn from_point_direction(p: &Vec3, d: &Vec3) -> Result<(Self, f64)> {
        let d = d.normalize();
        let m = p.cross(&d);
        let frame = Self::from_plucker(&d, &m)?;
        Ok((frame, m.norm()))
    }

    pub fn from_params(theta: &MinimalLineParams) -> Self {
        Self::from_rotation(&so3::exp(&theta.0))
    }

    pub fn minimal_params(&self) -> MinimalLineParams {
        MinimalLineParams(so3::log(&self.rotation()))
    }

    pub fn direction(&self) -> Vec3 {
        self.e1
    }

    /// Closest point on the line to the reference camera center, at unit depth.
    pub fn closest_point(&self) -> Vec3 {
        -self.e3
    }

    /// Plücker moment of the unit-depth line.
    pub fn moment(&self) -> Vec3 {
        -self.e2
    }

    /// Largest deviation from orthonormality and right-handedness.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let hand = (self.e1.cross(&self.e2) - self.e3).abs().max();
        ortho.max(hand)
    }

    /// Rotation angle between two frames in radians.
    pub fn angle_to(&self, other: &LineFrame) -> f64 {
        so3::log(&(self.rotation().transpose() * other.rotation())).norm()
    }

    /// Rotation angle to `other` after resolving the line-direction sign
    /// ambiguity (the S3 sign map), in radians.
    pub fn angle_to_up_to_direction(&self, other: &LineFrame) -> f64 {
        let aligned = if self.e1.dot(&other.e1) < 0.0 {
            Branch::S3.apply_frame(other)
        } else {
            *other
        };
        self.angle_to(&aligned)
    }
}

/// Camera velocity in the plane perpendicular to the line, in the line
/// frame, scaled by the inverse closest-point depth (units 1/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialVelocity {
    pub u_y: f64,
    pub u_z: f64,
}

impl PartialVelocity {
    pub fn new(u_y: f64, u_z: f64) -> Self {
        Self { u_y, u_z }
    }

    /// Projected camera velocity `u_y e2 + u_z e3` in the camera frame.
    pub fn projected(&self, frame: &LineFrame) -> Vec3 {
        frame.e2 * self.u_y + frame.e3 * self.u_z
    }

    pub fn norm(&self) -> f64 {
        self.u_y.hypot(self.u_z)
    }
}

/// The four sign-related solutions of the incidence relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// The solution itself.
    S0,
    /// `(e1, -e2, -e3, u_y, u_z)`: closest point behind the camera.
    S1,
    /// `(-e1, e2, -e3, -u_y, u_z)`: behind and direction flipped.
    S2,
    /// `(-e1, -e2, e3, -u_y, u_z)`: line direction flipped.
    S3,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::S0, Branch::S1, Branch::S2, Branch::S3];

    pub fn apply_frame(self, f: &LineFrame) -> LineFrame {
        match self {
            Branch::S0 => *f,
            Branch::S1 => LineFrame { e1: f.e1, e2: -f.e2, e3: -f.e3 },
            Branch::S2 => LineFrame { e1: -f.e1, e2: f.e2, e3: -f.e3 },
            Branch::S3 => LineFrame { e1: -f.e1, e2: -f.e2, e3: f.e3 },
        }
    }

    pub fn apply_velocity(self, u: &PartialVelocity) -> PartialVelocity {
        match self {
            Branch::S0 | Branch::S1 => *u,
            Branch::S2 | Branch::S3 => PartialVelocity { u_y: -u.u_y, u_z: u.u_z },
        }
    }

    pub fn apply(self, f: &LineFrame, u: &PartialVelocity) -> (LineFrame, PartialVelocity) {
        (self.apply_frame(f), self.apply_velocity(u))
    }

    /// Composition in the Klein four-group formed by the sign maps.
    pub fn compose(self, other: Branch) -> Branch {
        use Branch::*;
        let idx = |b: Branch| match b {
            S0 => 0u8,
            S1 => 1,
            S2 => 2,
            S3 => 3,
        };
        match idx(self) ^ idx(other) {
            0 => S0,
            1 => S1,
            2 => S2,
            _ => S3,
        }
    }

    /// Whether the branch places the line behind the camera relative to S0.
    pub fn is_mirrored(self) -> bool {
        matches!(self, Branch::S1 | Branch::S2)
    }
}

/// Left-hand side of the minimal incidence relation,
/// `t' f^T (u_z e2 - u_y e3) + f^T e2`.
pub fn incidence_residual(lf: &LineFrame, u: &PartialVelocity, obs: &BearingObservation) -> f64 {
    let f = &obs.f;
    obs.t_rel * (u.u_z * f.dot(&lf.e2) - u.u_y * f.dot(&lf.e3)) + f.dot(&lf.e2)
}

/// Camera center at `t_rel` in the normalized line scale.
fn camera_center(lf: &LineFrame, u: &PartialVelocity, t_rel: f64) -> Vec3 {
    u.projected(lf) * t_rel
}

/// Angle in radians between the bearing and the interpretation plane spanned
/// by the camera center at the event time and the line.
pub fn angular_reprojection_residual(
    lf: &LineFrame,
    u: &PartialVelocity,
    obs: &BearingObservation,
) -> Result<f64> {
    let c = camera_center(lf, u, obs.t_rel);
    let moment = (-lf.e3 - c).cross(&lf.e1);
    let n = moment.norm();
    if n < 1e-12 {
        return Err(Error::DegenerateResidual);
    }
    let s = (obs.f.dot(&moment) / (n * obs.f.norm())).clamp(-1.0, 1.0);
    Ok(s.asin().abs())
}

/// Signed distance along the event ray to the point closest to the line.
/// Positive values are in front of the camera.
pub fn ray_line_intersection_depth(
    lf: &LineFrame,
    u: &PartialVelocity,
    obs: &BearingObservation,
) -> Result<f64> {
    let f = obs.f.normalize();
    let b = f.dot(&lf.e1);
    let denom = 1.0 - b * b;
    if denom < 1e-12 {
        return Err(Error::ParallelRay);
    }
    let w0 = camera_center(lf, u, obs.t_rel) + lf.e3;
    let d = f.dot(&w0);
    let e = lf.e1.dot(&w0);
    Ok((b * e - d) / denom)
}
