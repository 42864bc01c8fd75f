//! Simulated sensors, effectors and the map-provided scanners: the agent's
//! physical part.
//!
//! Reads are pure functions of a world snapshot; drive and odometry state is
//! only ever advanced by the server tick.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geometry::{
    normalize_angle, ray_cast, AgentId, Body, Contact, Pose, Resource, ResourceId, ResourceStatus, WheelSpeeds,
    WorldMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub wheel_base: f64,
    pub max_speed: f64,
    /// Speed change per time unit; `f64::INFINITY` disables inertia.
    pub max_accel: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            wheel_base: 0.3,
            max_speed: 1.0,
            max_accel: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveState {
    pub commanded: WheelSpeeds,
    pub actual: WheelSpeeds,
    pub params: DriveParams,
}

impl DriveState {
    pub fn new(params: DriveParams) -> Self {
        Self {
            commanded: WheelSpeeds::STOP,
            actual: WheelSpeeds::STOP,
            params,
        }
    }

    /// Store a new command, clamping each wheel to the speed limit.
    pub fn command(&mut self, wheels: WheelSpeeds) {
        let m = self.params.max_speed;
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-m, m) };
        self.commanded = WheelSpeeds::new(clamp(wheels.left), clamp(wheels.right));
    }

    /// Move each actual wheel speed toward its command by at most `max_accel·dt`.
    pub fn apply_inertia(&self, dt: f64) -> DriveState {
        let step = self.params.max_accel * dt;
        let approach = |actual: f64, target: f64| {
            let diff = target - actual;
            // relative slack absorbs rounding in repeated increments
            if diff.abs() <= step * (1.0 + 1e-9) {
                target
            } else {
                actual + step.copysign(diff)
            }
        };
        DriveState {
            actual: WheelSpeeds::new(
                approach(self.actual.left, self.commanded.left),
                approach(self.actual.right, self.commanded.right),
            ),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchSensor {
    /// Relative to the heading.
    pub center_angle: f64,
    pub half_width: f64,
}

impl TouchSensor {
    /// True iff there is a contact whose bearing falls inside the sensor arc.
    pub fn read(&self, pose: &Pose, contact: Option<&Contact>) -> bool {
        let Some(contact) = contact else {
            return false;
        };
        let bearing = pose.bearing_to(contact.point);
        normalize_angle(bearing - self.center_angle).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximitySensor {
    pub mount_angle: f64,
    pub range: f64,
}

impl ProximitySensor {
    /// Distance from the body surface to the first object along the mount
    /// direction, if within range.
    pub fn read(&self, world: &WorldMap, own: AgentId, pose: &Pose, radius: f64, bodies: &[Body]) -> Option<f64> {
        let angle = pose.heading + self.mount_angle;
        let mut origin = pose.position + crate::geometry::Vec2::from_angle(angle) * radius;
        origin.x = origin.x.clamp(0.0, world.width);
        origin.y = origin.y.clamp(0.0, world.height);
        ray_cast(world, origin, angle, self.range, Some(own), bodies).map(|hit| hit.distance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryState {
    pub wheel_radius: f64,
    pub ticks_per_rev: u32,
    /// Accumulated wheel rotations (left, right).
    pub accum: (f64, f64),
    /// Integer encoder counts (left, right).
    pub reported: (i64, i64),
}

impl OdometryState {
    pub fn new(wheel_radius: f64, ticks_per_rev: u32) -> Self {
        Self {
            wheel_radius,
            ticks_per_rev,
            accum: (0.0, 0.0),
            reported: (0, 0),
        }
    }

    pub fn advance(&self, actual: WheelSpeeds, dt: f64) -> OdometryState {
        let circumference = TAU * self.wheel_radius;
        let accum = (
            self.accum.0 + actual.left * dt / circumference,
            self.accum.1 + actual.right * dt / circumference,
        );
        let tpr = f64::from(self.ticks_per_rev);
        OdometryState {
            accum,
            reported: ((accum.0 * tpr).floor() as i64, (accum.1 * tpr).floor() as i64),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub name: String,
    pub bearing: f64,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
}

impl ScanReport {
    pub fn nearest(&self, front_only: bool) -> Option<&ScanEntry> {
        self.entries
            .iter()
            .filter(|e| e.distance.is_some())
            .filter(|e| !front_only || e.bearing.abs() <= FRAC_PI_2)
            .min_by(|a, b| a.distance.partial_cmp(&b.distance).expect("finite distances"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisionSensor {
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sighting {
    pub id: ResourceId,
    pub bearing: f64,
    pub distance: f64,
}

/// Server-side view of one agent, used by the scanners.
#[derive(Debug, Clone, Copy)]
pub struct AgentView<'a> {
    pub id: AgentId,
    pub name: &'a str,
    pub pose: Pose,
    pub radius: f64,
}

/// Bearings to every other agent; distances only within `near_threshold` (closed).
pub fn scan_agents(own: &AgentView<'_>, agents: &[AgentView<'_>], near_threshold: f64) -> ScanReport {
    let mut entries: Vec<ScanEntry> = agents
        .iter()
        .filter(|a| a.id != own.id)
        .map(|a| {
            let dist = a.pose.position.distance(own.pose.position);
            ScanEntry {
                name: a.name.to_string(),
                bearing: own.pose.bearing_to(a.pose.position),
                distance: (dist <= near_threshold).then_some(dist),
            }
        })
        .collect();
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    ScanReport { entries }
}

/// Resources visible to `own`: in the field, or stored in someone else's home.
/// Carried resources and resources in the agent's own home are never seen.
pub fn scan_resources(own: &AgentView<'_>, resources: &[Resource], vision: &VisionSensor) -> Vec<Sighting> {
    resources
        .iter()
        .filter(|r| match &r.status {
            ResourceStatus::InField => true,
            ResourceStatus::Carried(_) => false,
            ResourceStatus::Stored(owner) => owner != own.name,
        })
        .filter_map(|r| {
            let distance = r.position.distance(own.pose.position);
            (distance <= vision.range).then(|| Sighting {
                id: r.id,
                bearing: own.pose.bearing_to(r.position),
                distance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeviceKind {
    Floor,
    Touch(TouchSensor),
    Proximity(ProximitySensor),
    Odometry {
        wheel_radius: f64,
        ticks_per_rev: u32,
    },
    /// Map-provided agent scanner; `near_threshold` overrides the run default.
    Scanner {
        near_threshold: Option<f64>,
    },
    Vision(VisionSensor),
    /// Absolute pose as reported by the map.
    Position,
    /// Reports the carried resource, if any.
    Gripper,
}

impl DeviceKind {
    pub fn tag(&self) -> &'static str {
        match self {
            DeviceKind::Floor => "floor",
            DeviceKind::Touch(_) => "touch",
            DeviceKind::Proximity(_) => "proximity",
            DeviceKind::Odometry { .. } => "odometry",
            DeviceKind::Scanner { .. } => "scanner",
            DeviceKind::Vision(_) => "vision",
            DeviceKind::Position => "position",
            DeviceKind::Gripper => "gripper",
        }
    }

    /// Scalar channels a threshold rule may reference; the first is the default.
    pub fn channels(&self) -> &'static [&'static str] {
        match self {
            DeviceKind::Floor => &["value"],
            DeviceKind::Touch(_) => &["value"],
            DeviceKind::Proximity(_) => &["value"],
            DeviceKind::Odometry { .. } => &["left", "right"],
            DeviceKind::Scanner { .. } => &["nearest", "nearest_front", "count"],
            DeviceKind::Vision(_) => &["nearest", "count"],
            DeviceKind::Position => &["x", "y", "heading"],
            DeviceKind::Gripper => &["value"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    pub kind: DeviceKind,
}

impl DeviceSpec {
    pub fn new(name: &str, kind: DeviceKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

/// Default suite modelled on a small two-wheeled robot: a floor sensor, wheel
/// encoders, two forward infrared rangers, four whisker switches (two forward,
/// two backward), plus the map's agent scanner.
pub fn roundie_suite() -> Vec<DeviceSpec> {
    let touch = |center_angle| {
        DeviceKind::Touch(TouchSensor {
            center_angle,
            half_width: FRAC_PI_4,
        })
    };
    let ir = |mount_angle| {
        DeviceKind::Proximity(ProximitySensor {
            mount_angle,
            range: 1.0,
        })
    };
    vec![
        DeviceSpec::new("floor", DeviceKind::Floor),
        DeviceSpec::new(
            "odo",
            DeviceKind::Odometry {
                wheel_radius: 0.05,
                ticks_per_rev: 100,
            },
        ),
        DeviceSpec::new("ir_left", ir(PI / 12.0)),
        DeviceSpec::new("ir_right", ir(-PI / 12.0)),
        DeviceSpec::new("touch_fl", touch(FRAC_PI_6)),
        DeviceSpec::new("touch_fr", touch(-FRAC_PI_6)),
        DeviceSpec::new("touch_bl", touch(PI - FRAC_PI_6)),
        DeviceSpec::new("touch_br", touch(-PI + FRAC_PI_6)),
        DeviceSpec::new("scan", DeviceKind::Scanner { near_threshold: None }),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reading {
    Floor(f64),
    Touch(bool),
    Proximity(Option<f64>),
    Odometry { left: i64, right: i64 },
    Scan(ScanReport),
    Vision(Vec<Sighting>),
    Position(Pose),
    Gripper(Option<ResourceId>),
}

impl Reading {
    /// Scalar view used by threshold rules; `None` when nothing is sensed.
    pub fn channel(&self, channel: Option<&str>) -> Option<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match (self, channel.unwrap_or("")) {
            (Reading::Floor(v), "" | "value") => Some(*v),
            (Reading::Touch(b), "" | "value") => Some(flag(*b)),
            (Reading::Proximity(d), "" | "value") => *d,
            (Reading::Odometry { left, .. }, "" | "left") => Some(*left as f64),
            (Reading::Odometry { right, .. }, "right") => Some(*right as f64),
            (Reading::Scan(r), "" | "nearest") => r.nearest(false).and_then(|e| e.distance),
            (Reading::Scan(r), "nearest_front") => r.nearest(true).and_then(|e| e.distance),
            (Reading::Scan(r), "count") => Some(r.entries.len() as f64),
            (Reading::Vision(s), "" | "nearest") => s.iter().map(|s| s.distance).min_by(|a, b| a.total_cmp(b)),
            (Reading::Vision(s), "count") => Some(s.len() as f64),
            (Reading::Position(p), "x") => Some(p.position.x),
            (Reading::Position(p), "y") => Some(p.position.y),
            (Reading::Position(p), "heading") => Some(p.heading),
            (Reading::Gripper(c), "" | "value") => Some(flag(c.is_some())),
            _ => None,
        }
    }
}

/// One tick's device readings in suite declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Readings {
    pub values: Vec<(String, Reading)>,
}

impl Readings {
    pub fn get(&self, device: &str) -> Option<&Reading> {
        self.values.iter().find(|(name, _)| name == device).map(|(_, r)| r)
    }

    /// Value of a `device` or `device.channel` source.
    pub fn source(&self, source: &str) -> Option<f64> {
        let (device, channel) = match source.split_once('.') {
            Some((d, c)) => (d, Some(c)),
            None => (source, None),
        };
        self.get(device)?.channel(channel)
    }

    pub fn first<T>(&self, pick: impl Fn(&Reading) -> Option<T>) -> Option<T> {
        self.values.iter().find_map(|(_, r)| pick(r))
    }

    pub fn position(&self) -> Option<Pose> {
        self.first(|r| match r {
            Reading::Position(p) => Some(*p),
            _ => None,
        })
    }

    pub fn scan(&self) -> Option<&ScanReport> {
        self.values.iter().find_map(|(_, r)| match r {
            Reading::Scan(s) => Some(s),
            _ => None,
        })
    }

    pub fn sightings(&self) -> Option<&[Sighting]> {
        self.values.iter().find_map(|(_, r)| match r {
            Reading::Vision(s) => Some(s.as_slice()),
            _ => None,
        })
    }

    pub fn carrying(&self) -> Option<Option<ResourceId>> {
        self.first(|r| match r {
            Reading::Gripper(c) => Some(*c),
            _ => None,
        })
    }

    pub fn proximity(&self, device: &str) -> Option<f64> {
        match self.get(device)? {
            Reading::Proximity(d) => *d,
            _ => None,
        }
    }

    pub fn touched(&self, device: &str) -> bool {
        matches!(self.get(device), Some(Reading::Touch(true)))
    }
}
