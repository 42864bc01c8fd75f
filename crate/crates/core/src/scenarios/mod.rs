//! Scenario packages: bundled behaviors, policies, monitors and metrics.
//!
//! A scenario is selected by the `<scenario name=...>` element of a run
//! config. Its agents reference the bundled behaviors as `builtin:NAME` and
//! bind the matching policies through `strategy`.

use std::collections::BTreeMap;

use crate::agent::{AgentError, AgentSpec, NullPolicy, Policy, PolicySpec};
use crate::csm::EventInstance;
use crate::devices::Readings;
use crate::env::{Monitor, NoMonitor, RunConfig, ScenarioSpec};
use crate::geometry::{Pose, Vec2};

pub mod chase;
pub mod formation;
pub mod generate;
pub mod maze;
pub mod mushrooms;

const ASSETS: &[(&str, &str)] = &[
    ("predator", include_str!("assets/predator.csm")),
    ("prey", include_str!("assets/prey.csm")),
    ("wall_follower", include_str!("assets/wall_follower.csm")),
    ("mushroom", include_str!("assets/mushroom.csm")),
    ("formation", include_str!("assets/formation.csm")),
];

/// Text of a bundled behavior.
pub fn builtin_behavior(name: &str) -> Option<&'static str> {
    ASSETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Every bundled behavior as `(name, text)`.
pub fn builtin_behaviors() -> &'static [(&'static str, &'static str)] {
    ASSETS
}

pub const POLICIES: &[&str] = &["null", "chase_predator", "chase_prey", "mushroom", "circle", "chain"];

pub fn make_policy(spec: &PolicySpec) -> Result<Box<dyn Policy>, AgentError> {
    let p = Params::new(&spec.name, &spec.params);
    Ok(match spec.name.as_str() {
        "null" => {
            p.only(&[])?;
            Box::new(NullPolicy)
        }
        "chase_predator" => Box::new(chase::PredatorPolicy::from_params(&p)?),
        "chase_prey" => Box::new(chase::PreyPolicy::from_params(&p)?),
        "mushroom" => Box::new(mushrooms::MushroomPolicy::from_params(&p)?),
        "circle" => Box::new(formation::CirclePolicy::from_params(&p)?),
        "chain" => Box::new(formation::ChainPolicy::from_params(&p)?),
        other => return Err(AgentError::UnknownPolicy(other.to_string())),
    })
}

/// Validate a `<scenario>` element against the configured agents. Returns
/// warnings on success.
pub fn check_scenario(spec: &ScenarioSpec, agents: &[AgentSpec]) -> Result<Vec<String>, String> {
    match spec.name.as_str() {
        "chase" => chase::check(spec, agents),
        "maze" => maze::check(spec, agents),
        "mushrooms" => mushrooms::check(spec, agents),
        "circle" | "chain" => formation::check(spec, agents),
        other => Err(format!(
            "unknown scenario `{other}` (expected chase, maze, mushrooms, circle or chain)"
        )),
    }
}

pub fn monitor_for(config: &RunConfig) -> Box<dyn Monitor> {
    let Some(spec) = &config.scenario else {
        return Box::new(NoMonitor);
    };
    match spec.name.as_str() {
        "chase" => Box::new(chase::ChaseMonitor::new(spec)),
        "maze" => Box::new(maze::MazeMonitor::new(spec, config)),
        "mushrooms" => Box::new(mushrooms::MushroomMonitor::new(spec, config)),
        "circle" => Box::new(formation::FormationMonitor::circle(spec, config)),
        "chain" => Box::new(formation::FormationMonitor::chain(spec, config)),
        _ => Box::new(NoMonitor),
    }
}

/// Policy parameters with typed access and typo checking.
pub(crate) struct Params<'a> {
    policy: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    pub(crate) fn new(policy: &'a str, map: &'a BTreeMap<String, String>) -> Self {
        Self { policy, map }
    }

    fn invalid(&self, message: String) -> AgentError {
        AgentError::PolicyConfig {
            policy: self.policy.to_string(),
            message,
        }
    }

    /// Reject parameters outside `known`.
    pub(crate) fn only(&self, known: &[&str]) -> Result<(), AgentError> {
        match self.map.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(self.invalid(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }

    pub(crate) fn f64(&self, key: &str, default: f64) -> Result<f64, AgentError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.invalid(format!("parameter `{key}` is not a number: `{v}`"))),
        }
    }

    pub(crate) fn opt_f64(&self, key: &str) -> Result<Option<f64>, AgentError> {
        if self.map.contains_key(key) {
            self.f64(key, 0.0).map(Some)
        } else {
            Ok(None)
        }
    }

    pub(crate) fn str(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(String::as_str)
    }

    pub(crate) fn point(&self, key: &str) -> Result<Option<Vec2>, AgentError> {
        let Some(v) = self.map.get(key) else {
            return Ok(None);
        };
        let parsed = v.split_once(',').and_then(|(x, y)| {
            let (x, y) = (x.trim().parse::<f64>().ok()?, y.trim().parse::<f64>().ok()?);
            (x.is_finite() && y.is_finite()).then(|| Vec2::new(x, y))
        });
        parsed
            .map(Some)
            .ok_or_else(|| self.invalid(format!("parameter `{key}` is not a point `x,y`: `{v}`")))
    }
}

/// Same lookups for scenario attributes, reported as config messages.
pub(crate) fn scenario_f64(spec: &ScenarioSpec, key: &str, default: f64) -> Result<f64, String> {
    match spec.param(key) {
        None => Ok(default),
        Some(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("scenario parameter `{key}` is not a number: `{v}`")),
    }
}

pub(crate) fn scenario_only(spec: &ScenarioSpec, known: &[&str]) -> Result<(), String> {
    match spec.params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(format!("unknown parameter `{k}` for scenario `{}`", spec.name)),
        None => Ok(()),
    }
}

pub(crate) fn require_agent<'a>(agents: &'a [AgentSpec], name: &str, role: &str) -> Result<&'a AgentSpec, String> {
    agents
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| format!("{role} role is bound to `{name}`, which is not an agent"))
}

/// Positions of the other agents in world coordinates, from the agent's own
/// position device and scanner. Only agents whose distance is disclosed.
pub(crate) fn scanned_neighbors(readings: &Readings) -> Option<(Pose, Vec<(String, Vec2)>)> {
    let pose = readings.position()?;
    let scan = readings.scan()?;
    let others = scan
        .entries
        .iter()
        .filter_map(|e| {
            let d = e.distance?;
            Some((
                e.name.clone(),
                pose.position + Vec2::from_angle(pose.heading + e.bearing) * d,
            ))
        })
        .collect();
    Some((pose, others))
}

/// Wheel speeds that rotate toward a world-frame velocity and then drive
/// straight along it. Drives backwards when the target lies behind.
pub(crate) fn track_velocity(pose: Pose, v: Vec2, wheel_base: f64, max_speed: f64, dt: f64) -> (f64, f64) {
    const ALIGNED: f64 = 0.05;
    let speed = v.length().min(max_speed);
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    let mut err = crate::geometry::normalize_angle(v.angle() - pose.heading);
    let mut dir = 1.0;
    if err.abs() > std::f64::consts::FRAC_PI_2 {
        err = crate::geometry::normalize_angle(err + std::f64::consts::PI);
        dir = -1.0;
    }
    if err.abs() > ALIGNED {
        // turn in place, never past the target heading within one step
        let w = (err.abs() * wheel_base / (2.0 * dt)).min(max_speed) * err.signum();
        return (-w, w);
    }
    (dir * speed, dir * speed)
}

pub(crate) fn event(name: &str) -> EventInstance {
    EventInstance::new(name, crate::csm::Origin::Strategy)
}
