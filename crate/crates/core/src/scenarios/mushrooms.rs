//! Mushroom picking: agents forage a shared forest and carry their finds to
//! homes in the corners. Stored mushrooms stay visible to everyone but their
//! owner, which is what eventually turns foragers into thieves.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{event, scenario_only, Params};
use crate::agent::{AgentError, AgentSpec, Policy, PolicyContext, PICK_MARGIN};
use crate::csm::{EventInstance, Payload};
use crate::env::{EnvironmentMap, Monitor, MonitorEvent, RunConfig, ScenarioSpec};
use crate::geometry::{normalize_angle, ObjectId, Rect, ResourceStatus, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Resume the random walk after each delivery.
    Random,
    /// Head back to where the last mushroom was found first.
    Return,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "random" => Some(Strategy::Random),
            "return" => Some(Strategy::Return),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Return => "return",
        }
    }
}

/// Distance from the home edge kept free when choosing a drop point.
const DROP_INSET: f64 = 0.5;
/// Close enough to a drop point or a remembered find.
const ARRIVED: f64 = 0.25;

/// Sensing, homing and anti-collision for one forager.
#[derive(Debug)]
pub struct MushroomPolicy {
    strategy: Strategy,
    home: Rect,
    d_min: f64,
    carrying: bool,
    drop_point: Option<Vec2>,
    last_find: Option<Vec2>,
}

impl MushroomPolicy {
    pub(crate) fn from_params(p: &Params<'_>) -> Result<Self, AgentError> {
        p.only(&["strategy", "home", "d_min"])?;
        let strategy = match p.str("strategy") {
            None => Strategy::Random,
            Some(s) => Strategy::parse(s).ok_or_else(|| AgentError::PolicyConfig {
                policy: "mushroom".into(),
                message: format!("strategy must be `random` or `return`, got `{s}`"),
            })?,
        };
        let home = match p.str("home") {
            None => Rect::new(0.0, 0.0, 3.0, 3.0),
            Some(v) => parse_rect(v).ok_or_else(|| AgentError::PolicyConfig {
                policy: "mushroom".into(),
                message: format!("home is not a rectangle `x,y,w,h`: `{v}`"),
            })?,
        };
        Ok(Self {
            strategy,
            home,
            d_min: p.f64("d_min", 1.0)?,
            carrying: false,
            drop_point: None,
            last_find: None,
        })
    }

    /// Reflex event that moves away from agents closer than `d_min`.
    fn avoidance(&self, ctx: &PolicyContext<'_>) -> Option<EventInstance> {
        let scan = ctx.readings.scan()?;
        let close: Vec<_> = scan
            .entries
            .iter()
            .filter(|e| e.distance.is_some_and(|d| d < self.d_min))
            .collect();
        if close.is_empty() {
            return None;
        }
        let away = close
            .iter()
            .fold(Vec2::ZERO, |acc, e| acc - Vec2::from_angle(e.bearing));
        let blocked_ahead = close.iter().any(|e| e.bearing.abs() < FRAC_PI_3);
        let dir = away.angle();
        Some(if !blocked_ahead && dir.abs() < FRAC_PI_4 {
            event("AVOID_FWD")
        } else if dir >= 0.0 {
            event("AVOID_L")
        } else {
            event("AVOID_R")
        })
    }
}

fn parse_rect(v: &str) -> Option<Rect> {
    let xs: Vec<f64> = v.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
    match xs.as_slice() {
        [x, y, w, h] if *w > 0.0 && *h > 0.0 => Some(Rect::new(*x, *y, *w, *h)),
        _ => None,
    }
}

fn bearing_event(name: &str, pose: &crate::geometry::Pose, to: Vec2) -> EventInstance {
    event(name).with_payload(Payload::Scalar(pose.bearing_to(to)))
}

impl Policy for MushroomPolicy {
    fn name(&self) -> &str {
        "mushroom"
    }

    fn prestep(&mut self, ctx: &mut PolicyContext<'_>) -> Vec<EventInstance> {
        ctx.memory.set_scalar("speed", ctx.drive.max_speed);
        let mut events: Vec<EventInstance> = self.avoidance(ctx).into_iter().collect();
        let Some(pose) = ctx.readings.position() else {
            return events;
        };
        let carrying = ctx.readings.carrying().flatten().is_some();
        if carrying && !self.carrying {
            self.last_find = Some(pose.position);
            let inner = |lo: f64, len: f64, rng: &mut rand_chacha::ChaCha8Rng| {
                let room = (len - 2.0 * DROP_INSET).max(0.0);
                lo + (len - room) / 2.0 + rng.gen::<f64>() * room
            };
            let x = inner(self.home.x, self.home.w, ctx.rng);
            let y = inner(self.home.y, self.home.h, ctx.rng);
            self.drop_point = Some(Vec2::new(x, y));
        }
        self.carrying = carrying;

        if carrying {
            let target = self.drop_point.unwrap_or(self.home.center());
            if pose.position.distance(target) <= ARRIVED && self.home.contains(pose.position) {
                events.push(event("AT_HOME"));
            } else {
                events.push(bearing_event("HOME_DIR", &pose, target));
            }
            return events;
        }

        let reach = ctx.body_radius + PICK_MARGIN;
        let nearest = ctx.readings.sightings().and_then(|s| {
            s.iter()
                .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)))
        });
        if let Some(s) = nearest {
            if s.distance <= reach - 1e-6 {
                events.push(event("REACH"));
            } else {
                events.push(event("SEEN").with_payload(Payload::Scalar(s.bearing)));
            }
            return events;
        }
        if self.strategy == Strategy::Return {
            if let Some(spot) = self.last_find {
                if pose.position.distance(spot) <= ARRIVED {
                    self.last_find = None;
                } else {
                    events.push(bearing_event("GOTO", &pose, spot));
                }
            }
        }
        events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stop as soon as the forest is empty.
    A,
    /// Run to the horizon regardless.
    B,
}

pub(crate) fn check(spec: &ScenarioSpec, agents: &[AgentSpec]) -> Result<Vec<String>, String> {
    scenario_only(spec, &["mode"])?;
    match spec.param("mode").unwrap_or("A") {
        "A" | "B" => {}
        other => return Err(format!("mushroom mode must be `A` or `B`, got `{other}`")),
    }
    let foragers: Vec<&AgentSpec> = agents.iter().filter(|a| a.policy.name == "mushroom").collect();
    if foragers.is_empty() {
        return Err("no agent uses the `mushroom` strategy".into());
    }
    let mut homes: Vec<(String, Rect)> = Vec::new();
    for a in &foragers {
        let d_min = a
            .policy
            .params
            .get("d_min")
            .and_then(|v| v.parse::<f64>().ok())
            .unwrap_or(1.0);
        if d_min <= 2.0 * a.body_radius {
            return Err(format!(
                "agent `{}`: d_min {d_min} must exceed twice the body radius {}",
                a.name, a.body_radius
            ));
        }
        let home = a.policy.params.get("home").and_then(|v| parse_rect(v));
        if let Some(h) = home {
            if let Some((other, _)) = homes.iter().find(|(_, o)| o.overlaps(&h)) {
                return Err(format!("homes of `{}` and `{other}` overlap", a.name));
            }
            homes.push((a.name.clone(), h));
        }
    }
    Ok(Vec::new())
}

/// Termination, crop and theft accounting, and the safety invariants.
pub struct MushroomMonitor {
    mode: Mode,
    initial: usize,
    completion: Option<u64>,
    /// (thief, owner) -> count
    thefts: BTreeMap<(String, String), u64>,
    hard_collisions: u64,
    conservation_violations: u64,
}

impl MushroomMonitor {
    pub fn new(spec: &ScenarioSpec, config: &RunConfig) -> Self {
        Self {
            mode: if spec.param("mode") == Some("B") {
                Mode::B
            } else {
                Mode::A
            },
            initial: config.world.resources.len(),
            completion: None,
            thefts: BTreeMap::new(),
            hard_collisions: 0,
            conservation_violations: 0,
        }
    }
}

/// Resources (in the forest, carried, stored).
pub fn resource_counts(env: &EnvironmentMap) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for r in &env.world().resources {
        match r.status {
            ResourceStatus::InField => c.0 += 1,
            ResourceStatus::Carried(_) => c.1 += 1,
            ResourceStatus::Stored(_) => c.2 += 1,
        }
    }
    c
}

/// Forest + carried + stored equals the initial count, and carried
/// resources agree with what the agents hold.
pub fn conserved(env: &EnvironmentMap, initial: usize) -> bool {
    let (f, c, s) = resource_counts(env);
    let holding = env.agents().iter().filter(|a| a.carrying.is_some()).count();
    let consistent = env.agents().iter().all(|a| match a.carrying {
        None => true,
        Some(rid) => env
            .world()
            .resources
            .get(rid.0 as usize)
            .is_some_and(|r| r.status == ResourceStatus::Carried(a.id)),
    });
    f + c + s == initial && c == holding && consistent
}

/// Agents in contact with another agent, or closer than two body radii.
pub fn hard_collision(env: &EnvironmentMap) -> bool {
    let agents = env.agents();
    agents
        .iter()
        .any(|a| matches!(a.contact, Some(c) if matches!(c.other, ObjectId::Agent(_))))
        || agents.iter().enumerate().any(|(i, a)| {
            agents[i + 1..]
                .iter()
                .any(|b| a.pose.position.distance(b.pose.position) < a.spec.body_radius + b.spec.body_radius - 1e-9)
        })
}

impl Monitor for MushroomMonitor {
    fn after_tick(&mut self, env: &EnvironmentMap) -> Vec<MonitorEvent> {
        let mut out = Vec::new();
        for t in &env.last_events().thefts {
            let thief = env.agents()[t.agent.0 as usize].spec.name.clone();
            out.push(MonitorEvent::Note(format!(
                "theft {thief} from {} resource {}",
                t.owner, t.resource
            )));
            *self.thefts.entry((thief, t.owner.clone())).or_default() += 1;
        }
        if hard_collision(env) {
            self.hard_collisions += 1;
        }
        if !conserved(env, self.initial) {
            self.conservation_violations += 1;
        }
        if self.completion.is_none() && resource_counts(env).0 == 0 {
            let tick = env.tick_count() - 1;
            self.completion = Some(tick);
            out.push(MonitorEvent::Note(format!("forest empty at tick {tick}")));
            if self.mode == Mode::A {
                out.push(MonitorEvent::Stop("forest_empty".into()));
            }
        }
        out
    }

    fn metrics(&self, env: &EnvironmentMap) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for a in env.agents() {
            let crop = env
                .world()
                .resources
                .iter()
                .filter(|r| r.status == ResourceStatus::Stored(a.spec.name.clone()))
                .count();
            m.insert(format!("crop.{}", a.spec.name), crop as f64);
            let stolen: u64 = self
                .thefts
                .iter()
                .filter(|((t, _), _)| *t == a.spec.name)
                .map(|(_, n)| n)
                .sum();
            m.insert(format!("thefts.{}", a.spec.name), stolen as f64);
        }
        for ((thief, owner), n) in &self.thefts {
            m.insert(format!("thefts.{thief}.from.{owner}"), *n as f64);
        }
        m.insert("thefts".into(), self.thefts.values().sum::<u64>() as f64);
        m.insert(
            "max_thefts_same_home".into(),
            self.thefts.values().copied().max().unwrap_or(0) as f64,
        );
        if let Some(t) = self.completion {
            m.insert("completion_tick".into(), t as f64);
        }
        let (f, c, s) = resource_counts(env);
        m.insert("forest".into(), f as f64);
        m.insert("carried".into(), c as f64);
        m.insert("stored".into(), s as f64);
        m.insert("hard_collisions".into(), self.hard_collisions as f64);
        m.insert("conservation_violations".into(), self.conservation_violations as f64);
        m
    }
}

/// Knobs for a generated mushroom run.
#[derive(Debug, Clone, PartialEq)]
pub struct MushroomParams {
    pub arena: f64,
    pub home: f64,
    pub mushrooms: usize,
    pub vision: f64,
    pub d_min: f64,
    pub speed: f64,
    /// One entry per agent; agents live in the corners, so at most four.
    pub strategies: Vec<Strategy>,
    pub mode: Mode,
    pub max_ticks: u64,
    pub pose_every: u64,
}

impl Default for MushroomParams {
    fn default() -> Self {
        Self {
            arena: 20.0,
            home: 3.0,
            mushrooms: 40,
            vision: 2.0,
            d_min: 1.0,
            speed: 0.5,
            strategies: vec![Strategy::Random, Strategy::Return, Strategy::Random, Strategy::Return],
            mode: Mode::A,
            max_ticks: 60_000,
            pose_every: 1,
        }
    }
}

/// Home rectangles in corner order: lower left, lower right, upper right, upper left.
pub fn corner_homes(arena: f64, side: f64) -> [Rect; 4] {
    let far = arena - side;
    [
        Rect::new(0.0, 0.0, side, side),
        Rect::new(far, 0.0, side, side),
        Rect::new(far, far, side, side),
        Rect::new(0.0, far, side, side),
    ]
}

/// Run config for a forest with homes in the corners. Mushroom positions are
/// drawn from `seed`, outside every home.
pub fn mushroom_config(p: &MushroomParams, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_4001);
    let homes = corner_homes(p.arena, p.home);
    let n = p.strategies.len().min(4);
    let mut s = String::new();
    let _ = writeln!(s, "<jade>");
    let _ = writeln!(
        s,
        r#"  <run seed="{seed}" tick="0.1" max_ticks="{}" near_threshold="{}" pose_every="{}"/>"#,
        p.max_ticks,
        p.d_min * 1.5,
        p.pose_every
    );
    let _ = writeln!(s, r#"  <world w="{0}" h="{0}">"#, p.arena);
    let names: Vec<String> = (0..n).map(|i| format!("m{i}")).collect();
    for (name, h) in names.iter().zip(homes.iter()) {
        let _ = writeln!(
            s,
            r#"    <home owner="{name}" x="{}" y="{}" w="{}" h="{}"/>"#,
            h.x, h.y, h.w, h.h
        );
    }
    let margin = 0.5;
    let mut placed = 0;
    while placed < p.mushrooms {
        let q = Vec2::new(
            rng.gen_range(margin..p.arena - margin),
            rng.gen_range(margin..p.arena - margin),
        );
        let near_home = homes
            .iter()
            .any(|h| Rect::new(h.x - 0.3, h.y - 0.3, h.w + 0.6, h.h + 0.6).contains(q));
        if !near_home {
            let _ = writeln!(s, r#"    <resource x="{:.3}" y="{:.3}"/>"#, q.x, q.y);
            placed += 1;
        }
    }
    let _ = writeln!(s, "  </world>");
    let mode = match p.mode {
        Mode::A => "A",
        Mode::B => "B",
    };
    let _ = writeln!(s, r#"  <scenario name="mushrooms" mode="{mode}"/>"#);
    let colors = ["red", "blue", "green", "orange"];
    let centre = Vec2::new(p.arena / 2.0, p.arena / 2.0);
    for i in 0..n {
        let h = homes[i];
        let c = h.center();
        let heading = normalize_angle((centre - c).angle() + rng.gen_range(-0.3..0.3));
        let _ = writeln!(
            s,
            r#"  <agent name="{}" color="{}" x="{}" y="{}" heading="{heading:.4}" csm="builtin:mushroom" strategy="mushroom">"#,
            names[i], colors[i], c.x, c.y
        );
        let _ = writeln!(s, r#"    <drive max_speed="{}"/>"#, p.speed);
        s.push_str(FORAGER_DEVICES.replace("{vision}", &p.vision.to_string()).as_str());
        let sp = p.speed;
        for (ev, l, r, prio) in [
            ("AVOID_L", -sp, sp, 3),
            ("AVOID_R", sp, -sp, 2),
            ("AVOID_FWD", sp, sp, 1),
        ] {
            let _ = writeln!(
                s,
                r#"    <reflex event="{ev}" left="{l}" right="{r}" priority="{prio}"/>"#
            );
        }
        let _ = writeln!(
            s,
            r#"    <param name="strategy" value="{}"/>"#,
            p.strategies[i].as_str()
        );
        let _ = writeln!(s, r#"    <param name="home" value="{},{},{},{}"/>"#, h.x, h.y, h.w, h.h);
        let _ = writeln!(s, r#"    <param name="d_min" value="{}"/>"#, p.d_min);
        let _ = writeln!(s, "  </agent>");
    }
    let _ = writeln!(s, "</jade>");
    s
}

const FORAGER_DEVICES: &str = r#"    <device name="pos" kind="position"/>
    <device name="scan" kind="scanner"/>
    <device name="eyes" kind="vision" range="{vision}"/>
    <device name="hand" kind="gripper"/>
    <device name="touch_fl" kind="touch" angle="0.7854" half_width="0.7854"/>
    <device name="touch_fr" kind="touch" angle="-0.7854" half_width="0.7854"/>
    <threshold source="touch_fl" op="gt" value="0.5" event="BUMP"/>
    <threshold source="touch_fr" op="gt" value="0.5" event="BUMP"/>
    <threshold source="hand" op="gt" value="0.5" event="CARRYING"/>
"#;
