use serde::{Deserialize, Serialize};

use super::{normalize_angle, GeometryError, Pose, Vec2};

/// Below this angular rate a step is integrated as a straight line.
const STRAIGHT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub left: f64,
    pub right: f64,
}

impl WheelSpeeds {
    pub const STOP: WheelSpeeds = WheelSpeeds { left: 0.0, right: 0.0 };

    pub const fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    pub fn linear(&self) -> f64 {
        (self.left + self.right) / 2.0
    }

    pub fn angular(&self, wheel_base: f64) -> f64 {
        (self.right - self.left) / wheel_base
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }
}

/// Advance a differential-drive pose by `dt` using the exact unicycle solution.
///
/// The arc endpoint is evaluated through the chord form
/// `v·dt·sinc(ω·dt/2)` along `θ + ω·dt/2`, which equals the rotation about the
/// instantaneous centre of curvature but stays well conditioned when the
/// turning radius is huge.
pub fn integrate_unicycle(pose: Pose, wheels: WheelSpeeds, wheel_base: f64, dt: f64) -> Result<Pose, GeometryError> {
    if !pose.is_finite() {
        return Err(GeometryError::NonFinite("pose"));
    }
    if !wheels.is_finite() {
        return Err(GeometryError::NonFinite("wheel speeds"));
    }
    if !wheel_base.is_finite() || !dt.is_finite() {
        return Err(GeometryError::NonFinite("wheel base / dt"));
    }
    if wheel_base <= 0.0 {
        return Err(GeometryError::WheelBase(wheel_base));
    }
    if dt <= 0.0 {
        return Err(GeometryError::TimeStep(dt));
    }

    let v = wheels.linear();
    let omega = wheels.angular(wheel_base);
    let heading = pose.heading;

    if omega.abs() < STRAIGHT_EPS {
        let position = pose.position + Vec2::from_angle(heading) * (v * dt);
        return Ok(Pose { position, heading });
    }

    let half = omega * dt / 2.0;
    let chord = v * dt * (half.sin() / half);
    let position = pose.position + Vec2::from_angle(heading + half) * chord;
    Ok(Pose {
        position,
        heading: normalize_angle(heading + 2.0 * half),
    })
}
