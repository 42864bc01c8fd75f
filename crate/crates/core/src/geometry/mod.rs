//! Continuous 2D world model: vectors, poses, differential-drive kinematics,
//! obstacles, collision resolution, ray queries and the floor field.

mod collision;
mod kinematics;
mod world;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub use collision::{disc_penetration, move_with_collision, ray_cast, Motion, MovingDisc, RayHit};
pub use kinematics::{integrate_unicycle, WheelSpeeds};
pub use world::{
    AgentId, Body, Contact, FloorGrid, Home, ObjectId, Polygon, Rect, Resource, ResourceId, ResourceStatus, WorldMap,
};

/// Tolerance above which an overlap counts as a penetration.
pub const PENETRATION_EPS: f64 = 1e-9;
/// Travel tolerance of the contact bisection.
pub const CONTACT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("wheel base must be positive, got {0}")]
    WheelBase(f64),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("point ({x}, {y}) lies outside the world bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid polygon: {0}")]
    Polygon(String),
    #[error("invalid world: {0}")]
    World(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `angle`.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let len = self.length();
        (len > 0.0 && len.is_finite()).then(|| self / len)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Same vector with its length capped at `max_len`.
    pub fn clamp_length(self, max_len: f64) -> Vec2 {
        let len = self.length();
        if len > max_len && len > 0.0 {
            self * (max_len / len)
        } else {
            self
        }
    }

    /// Rotate counter-clockwise by `angle`.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let r = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to exactly TAU
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Position plus heading; the heading is kept in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading: normalize_angle(heading),
        }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Bearing of `target` relative to this pose's heading, in `[-π, π)`.
    pub fn bearing_to(&self, target: Vec2) -> f64 {
        normalize_angle((target - self.position).angle() - self.heading)
    }

    /// Express a world point in this pose's body frame (x forward, y left).
    pub fn to_local(&self, world: Vec2) -> Vec2 {
        (world - self.position).rotate(-self.heading)
    }

    pub fn to_world(&self, local: Vec2) -> Vec2 {
        self.position + local.rotate(self.heading)
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.heading.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_wraps_into_half_open_range() {
        assert_eq!(normalize_angle(PI), -PI);
        assert_eq!(normalize_angle(-PI), -PI);
        assert!((normalize_angle(3.0 * PI) + PI).abs() < 1e-12);
        assert!((normalize_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((normalize_angle(-0.5 - TAU) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bearing_of_east_point_from_north_heading() {
        let pose = Pose::new(0.0, 0.0, PI / 2.0);
        let b = pose.bearing_to(Vec2::new(5.0, 0.0));
        assert!((b + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn local_world_roundtrip() {
        let pose = Pose::new(1.0, -2.0, 0.7);
        let p = Vec2::new(3.5, 4.25);
        let back = pose.to_world(pose.to_local(p));
        assert!(back.distance(p) < 1e-12);
    }

    proptest! {
        #[test]
        fn normalized_angle_in_range(a in -1e4f64..1e4) {
            let n = normalize_angle(a);
            prop_assert!((-PI..PI).contains(&n));
            let diff = (a - n) / TAU;
            prop_assert!((diff - diff.round()).abs() < 1e-9);
        }
    }
}
