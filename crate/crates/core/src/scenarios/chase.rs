//! Chasing game: a predator runs down a wandering, fleeing prey.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{event, require_agent, scenario_only, Params};
use crate::agent::{AgentError, AgentSpec, Policy, PolicyContext};
use crate::csm::{EventInstance, Payload};
use crate::devices::{DeviceKind, TouchSensor};
use crate::env::{EnvironmentMap, Monitor, MonitorEvent, ScenarioSpec};
use crate::geometry::{AgentId, ObjectId, Vec2};

/// Extra gap tolerated between bodies when the predator declares a catch.
const CATCH_SLACK: f64 = 0.05;

fn front_touched(ctx: &PolicyContext<'_>) -> bool {
    ctx.readings.touched("touch_fl") || ctx.readings.touched("touch_fr")
}

/// Feeds the predator behavior the bearing of its quarry and reports the catch.
#[derive(Debug)]
pub struct PredatorPolicy {
    target: Option<String>,
}

impl PredatorPolicy {
    pub(crate) fn from_params(p: &Params<'_>) -> Result<Self, AgentError> {
        p.only(&["target"])?;
        Ok(Self {
            target: p.str("target").map(str::to_string),
        })
    }
}

impl Policy for PredatorPolicy {
    fn name(&self) -> &str {
        "chase_predator"
    }

    fn prestep(&mut self, ctx: &mut PolicyContext<'_>) -> Vec<EventInstance> {
        ctx.memory.set_scalar("speed", ctx.drive.max_speed);
        let Some(scan) = ctx.readings.scan() else {
            return Vec::new();
        };
        let quarry = match &self.target {
            Some(name) => scan.entries.iter().find(|e| e.name == *name),
            None => scan.nearest(false).or(scan.entries.first()),
        };
        let Some(q) = quarry else {
            return Vec::new();
        };
        let mut events = vec![event("PREY").with_payload(Payload::Scalar(q.bearing))];
        let touching = q.distance.is_some_and(|d| d <= 2.0 * ctx.body_radius + CATCH_SLACK);
        if touching && front_touched(ctx) {
            events.push(event("CAUGHT"));
        }
        events
    }
}

/// Tells the prey where the nearest disclosed agent is.
#[derive(Debug)]
pub struct PreyPolicy;

impl PreyPolicy {
    pub(crate) fn from_params(p: &Params<'_>) -> Result<Self, AgentError> {
        p.only(&[])?;
        Ok(Self)
    }
}

impl Policy for PreyPolicy {
    fn name(&self) -> &str {
        "chase_prey"
    }

    fn prestep(&mut self, ctx: &mut PolicyContext<'_>) -> Vec<EventInstance> {
        ctx.memory.set_scalar("speed", ctx.drive.max_speed);
        ctx.readings
            .scan()
            .and_then(|s| s.nearest(false))
            .map(|e| vec![event("THREAT").with_payload(Payload::Scalar(e.bearing))])
            .unwrap_or_default()
    }
}

pub(crate) fn check(spec: &ScenarioSpec, agents: &[AgentSpec]) -> Result<Vec<String>, String> {
    scenario_only(spec, &["predator", "prey"])?;
    let predator = require_agent(agents, spec.param("predator").unwrap_or("predator"), "predator")?;
    let prey = require_agent(agents, spec.param("prey").unwrap_or("prey"), "prey")?;
    let mut warnings = Vec::new();
    if predator.drive.max_speed <= prey.drive.max_speed {
        warnings.push(format!(
            "predator max_speed {} does not exceed prey max_speed {}; the chase may never end",
            predator.drive.max_speed, prey.drive.max_speed
        ));
    }
    Ok(warnings)
}

/// Stops the run when the predator's front touch fires on contact with the prey.
pub struct ChaseMonitor {
    predator: String,
    prey: String,
    catch_tick: Option<u64>,
}

impl ChaseMonitor {
    pub fn new(spec: &ScenarioSpec) -> Self {
        Self {
            predator: spec.param("predator").unwrap_or("predator").to_string(),
            prey: spec.param("prey").unwrap_or("prey").to_string(),
            catch_tick: None,
        }
    }
}

/// True when `a` touched `target` with one of its forward-facing touch sensors.
pub fn front_contact(env: &EnvironmentMap, a: &str, target: AgentId) -> bool {
    let Some(a) = env.agent(a) else { return false };
    let Some(contact) = a.contact.filter(|c| c.other == ObjectId::Agent(target)) else {
        return false;
    };
    a.spec.devices.iter().any(|d| match d.kind {
        DeviceKind::Touch(t @ TouchSensor { center_angle, .. }) => {
            center_angle.abs() < std::f64::consts::FRAC_PI_2 && t.read(&a.pose, Some(&contact))
        }
        _ => false,
    })
}

impl Monitor for ChaseMonitor {
    fn after_tick(&mut self, env: &EnvironmentMap) -> Vec<MonitorEvent> {
        if self.catch_tick.is_some() {
            return Vec::new();
        }
        let (Some(pred), Some(prey)) = (env.agent(&self.predator), env.agent(&self.prey)) else {
            return Vec::new();
        };
        if !front_contact(env, &self.predator, prey.id) {
            return Vec::new();
        }
        let tick = env.tick_count() - 1;
        self.catch_tick = Some(tick);
        let at = (pred.pose.position + prey.pose.position) * 0.5;
        vec![
            MonitorEvent::Mark {
                label: "catch".into(),
                position: at,
            },
            MonitorEvent::Stop("caught".into()),
        ]
    }

    fn metrics(&self, env: &EnvironmentMap) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("caught".into(), if self.catch_tick.is_some() { 1.0 } else { 0.0 });
        if let Some(t) = self.catch_tick {
            m.insert("catch_tick".into(), t as f64);
        }
        for (role, name) in [("predator", &self.predator), ("prey", &self.prey)] {
            if let Some(a) = env.agent(name) {
                m.insert(format!("{role}_path"), a.path_length);
            }
        }
        m
    }
}

/// Knobs for a generated chase run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaseParams {
    pub arena: f64,
    pub predator_speed: f64,
    pub prey_speed: f64,
    pub near_threshold: f64,
    pub max_ticks: u64,
    pub pose_every: u64,
    /// Fixed start positions; random from the seed when absent.
    pub starts: Option<(Vec2, Vec2)>,
}

impl Default for ChaseParams {
    fn default() -> Self {
        Self {
            arena: 20.0,
            predator_speed: 1.2,
            prey_speed: 1.0,
            near_threshold: 3.0,
            max_ticks: 5000,
            pose_every: 1,
            starts: None,
        }
    }
}

/// Run config for a chase in an open square arena. Start poses are drawn
/// from `seed` so each seed gives a different game.
pub fn chase_config(p: &ChaseParams, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4A5_E000);
    let margin = 1.0;
    let draw = |rng: &mut ChaCha8Rng| {
        Vec2::new(
            rng.gen_range(margin..p.arena - margin),
            rng.gen_range(margin..p.arena - margin),
        )
    };
    let (a, b) = p.starts.unwrap_or_else(|| {
        let a = draw(&mut rng);
        let mut b = draw(&mut rng);
        while b.distance(a) < p.arena / 4.0 {
            b = draw(&mut rng);
        }
        (a, b)
    });
    let ha = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let hb = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut s = String::new();
    let _ = writeln!(s, "<jade>");
    let _ = writeln!(
        s,
        r#"  <run seed="{seed}" tick="0.1" max_ticks="{}" near_threshold="{}" pose_every="{}"/>"#,
        p.max_ticks, p.near_threshold, p.pose_every
    );
    let _ = writeln!(s, r#"  <world w="{0}" h="{0}"/>"#, p.arena);
    let _ = writeln!(s, r#"  <scenario name="chase" predator="predator" prey="prey"/>"#);
    let _ = writeln!(
        s,
        r#"  <agent name="predator" color="red" x="{:.3}" y="{:.3}" heading="{ha:.3}" csm="builtin:predator" strategy="chase_predator">"#,
        a.x, a.y
    );
    let _ = writeln!(s, r#"    <drive max_speed="{}"/>"#, p.predator_speed);
    let _ = writeln!(s, "  </agent>");
    let _ = writeln!(
        s,
        r#"  <agent name="prey" color="green" x="{:.3}" y="{:.3}" heading="{hb:.3}" csm="builtin:prey" strategy="chase_prey">"#,
        b.x, b.y
    );
    let _ = writeln!(s, r#"    <drive max_speed="{}"/>"#, p.prey_speed);
    for t in ["touch_fl", "touch_fr"] {
        let _ = writeln!(s, r#"    <threshold source="{t}" op="gt" value="0.5" event="BUMP"/>"#);
    }
    let _ = writeln!(s, "  </agent>");
    let _ = writeln!(s, "</jade>");
    s
}
