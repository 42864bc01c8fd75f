//! The layered agent: interpretation (thresholds and reflexes), operation
//! (concurrent state machines) and strategy (scenario policies with memory).

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csm::{CsmDocument, CsmError, CsmRuntime, Effect, EventInstance, Memory, Origin, Payload, MSG, TICK};
use crate::devices::{DeviceSpec, DriveParams, Readings};
use crate::geometry::{Pose, ResourceId, WheelSpeeds};

/// Extra reach beyond the body radius within which a resource can be picked.
pub const PICK_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn parse(s: &str) -> Option<CmpOp> {
        Some(match s {
            "<" | "lt" => CmpOp::Lt,
            "<=" | "le" => CmpOp::Le,
            ">" | "gt" => CmpOp::Gt,
            ">=" | "ge" => CmpOp::Ge,
            "==" | "eq" => CmpOp::Eq,
            "!=" | "ne" => CmpOp::Ne,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
        }
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

/// Turns a device reading into an event when a comparison holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    /// `device` or `device.channel`.
    pub source: String,
    pub op: CmpOp,
    pub value: f64,
    pub event: String,
    /// Attach the reading as the event payload.
    pub payload: bool,
}

/// A direct event to wheel command mapping that overrides the state machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflexRule {
    pub trigger: String,
    pub command: WheelSpeeds,
    pub priority: i32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Attachment {
    #[default]
    InProcess,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub color: String,
    pub body_radius: f64,
    pub initial_pose: Pose,
    pub drive: DriveParams,
    pub devices: Vec<DeviceSpec>,
    /// Where the behavior came from (file name or `builtin:NAME`); empty when none.
    pub behavior_source: String,
    pub behavior: CsmDocument,
    pub policy: PolicySpec,
    pub thresholds: Vec<ThresholdRule>,
    pub reflexes: Vec<ReflexRule>,
    pub memory_capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub from: String,
    /// Agent name, group name, or `*`.
    pub to: String,
    pub payload: Option<Payload>,
    pub sent_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outgoing {
    pub to: String,
    pub payload: Option<Payload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceOp {
    Pick(ResourceId),
    Drop,
}

/// Everything an agent asks of the world in one tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentOutput {
    pub drive: WheelSpeeds,
    pub messages: Vec<Outgoing>,
    pub ops: Vec<ResourceOp>,
    /// Diagnostics from the mind itself (e.g. a remote timeout), logged as `note`.
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent `{agent}` at tick {tick}: {source}")]
    Csm {
        agent: String,
        tick: u64,
        source: Box<CsmError>,
    },
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("policy `{policy}`: {message}")]
    PolicyConfig { policy: String, message: String },
    #[error("agent `{agent}`: {message}")]
    Remote { agent: String, message: String },
}

/// One event per satisfied rule, then one `MSG` per inbox message, after `TICK`.
pub fn interpret(readings: &Readings, rules: &[ThresholdRule], inbox: &[Message]) -> Vec<EventInstance> {
    let mut events = vec![EventInstance::new(TICK, Origin::Sensor)];
    for rule in rules {
        let Some(value) = readings.source(&rule.source) else {
            continue;
        };
        if rule.op.holds(value, rule.value) {
            let mut ev = EventInstance::new(rule.event.clone(), Origin::Sensor);
            if rule.payload {
                ev.payload = Some(Payload::Scalar(value));
            }
            events.push(ev);
        }
    }
    for m in inbox {
        events.push(EventInstance {
            name: MSG.to_string(),
            payload: m.payload,
            origin: Origin::Message,
        });
    }
    events
}

/// Command of the highest-priority triggered reflex, if any.
pub fn apply_reflexes(events: &[EventInstance], reflexes: &[ReflexRule]) -> Option<WheelSpeeds> {
    reflexes
        .iter()
        .filter(|r| events.iter().any(|e| e.name == r.trigger))
        .max_by_key(|r| r.priority)
        .map(|r| r.command)
}

/// State a policy may read or update before the state machines step.
pub struct PolicyContext<'a> {
    pub tick: u64,
    pub name: &'a str,
    pub body_radius: f64,
    pub drive: &'a DriveParams,
    pub readings: &'a Readings,
    pub inbox: &'a [Message],
    pub events: &'a [EventInstance],
    pub memory: &'a mut Memory,
    pub rng: &'a mut ChaCha8Rng,
}

/// The strategy layer. Returned events are seen by the machines in the same tick.
pub trait Policy: Send + fmt::Debug {
    fn name(&self) -> &str;
    fn prestep(&mut self, ctx: &mut PolicyContext<'_>) -> Vec<EventInstance>;
}

#[derive(Debug, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn name(&self) -> &str {
        "null"
    }

    fn prestep(&mut self, _: &mut PolicyContext<'_>) -> Vec<EventInstance> {
        Vec::new()
    }
}

/// Anything that can decide an agent's output for a tick: a local layered
/// agent, a remote process, or a recorded trace.
pub trait AgentMind: Send {
    fn step(&mut self, tick: u64, readings: &Readings, inbox: &[Message]) -> Result<AgentOutput, AgentError>;

    /// Called once when the run ends.
    fn finish(&mut self, _reason: &str) {}
}

/// Derive an agent's random stream from the run seed and its id.
pub fn agent_seed(run_seed: u64, agent_id: u32) -> u64 {
    let mut z = run_seed ^ (u64::from(agent_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The full agent pipeline run in-process.
#[derive(Debug)]
pub struct LayeredAgent {
    name: String,
    body_radius: f64,
    drive: DriveParams,
    thresholds: Vec<ThresholdRule>,
    reflexes: Vec<ReflexRule>,
    csm: CsmRuntime,
    memory: Memory,
    policy: Box<dyn Policy>,
    rng: ChaCha8Rng,
    pending: Vec<EventInstance>,
    latched: WheelSpeeds,
}

impl LayeredAgent {
    pub fn new(spec: &AgentSpec, policy: Box<dyn Policy>, seed: u64) -> Self {
        Self {
            name: spec.name.clone(),
            body_radius: spec.body_radius,
            drive: spec.drive,
            thresholds: spec.thresholds.clone(),
            reflexes: spec.reflexes.clone(),
            csm: CsmRuntime::new(&spec.behavior),
            memory: Memory::for_document(&spec.behavior, spec.memory_capacity),
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: Vec::new(),
            latched: WheelSpeeds::STOP,
        }
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn csm(&self) -> &CsmRuntime {
        &self.csm
    }

    /// Nearest visible resource within pick reach.
    fn pick_target(&self, readings: &Readings) -> Option<ResourceId> {
        let reach = self.body_radius + PICK_MARGIN;
        readings
            .sightings()?
            .iter()
            .filter(|s| s.distance <= reach)
            .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)))
            .map(|s| s.id)
    }
}

impl AgentMind for LayeredAgent {
    fn step(&mut self, tick: u64, readings: &Readings, inbox: &[Message]) -> Result<AgentOutput, AgentError> {
        let mut events = interpret(readings, &self.thresholds, inbox);
        let injected = {
            let mut ctx = PolicyContext {
                tick,
                name: &self.name,
                body_radius: self.body_radius,
                drive: &self.drive,
                readings,
                inbox,
                events: &events,
                memory: &mut self.memory,
                rng: &mut self.rng,
            };
            self.policy.prestep(&mut ctx)
        };
        events.extend(injected);
        events.append(&mut self.pending);

        let result = self
            .csm
            .step(&events, &mut self.memory, &mut self.rng)
            .map_err(|source| AgentError::Csm {
                agent: self.name.clone(),
                tick,
                source: Box::new(source),
            })?;
        self.pending = result.emitted;

        let mut out = AgentOutput::default();
        for effect in result.effects {
            match effect {
                Effect::SetWheels { left, right } => self.latched = WheelSpeeds::new(left, right),
                Effect::Send { dest, payload } => out.messages.push(Outgoing { to: dest, payload }),
                Effect::Pick => {
                    if let Some(id) = self.pick_target(readings) {
                        out.ops.push(ResourceOp::Pick(id));
                    }
                }
                Effect::Drop => out.ops.push(ResourceOp::Drop),
            }
        }
        out.drive = apply_reflexes(&events, &self.reflexes).unwrap_or(self.latched);
        for e in &events {
            self.memory.record(tick, &e.name);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csm::parse_csm;
    use crate::devices::{Reading, Sighting};

    fn spec(csm: &str) -> AgentSpec {
        AgentSpec {
            name: "a".into(),
            color: "red".into(),
            body_radius: 0.2,
            initial_pose: Pose::default(),
            drive: DriveParams::default(),
            devices: Vec::new(),
            behavior_source: String::new(),
            behavior: parse_csm(csm).unwrap(),
            policy: PolicySpec::default(),
            thresholds: Vec::new(),
            reflexes: Vec::new(),
            memory_capacity: 4,
        }
    }

    fn readings(values: Vec<(&str, Reading)>) -> Readings {
        Readings {
            values: values.into_iter().map(|(n, r)| (n.to_string(), r)).collect(),
        }
    }

    fn names(events: &[EventInstance]) -> Vec<&str> {
        events.iter().map(|e| e.name.as_str()).collect()
    }

    #[test]
    fn interpret_tick_only() {
        assert_eq!(names(&interpret(&Readings::default(), &[], &[])), vec!["TICK"]);
    }

    #[test]
    fn interpret_touch_and_payload() {
        let r = readings(vec![
            ("touch_fl", Reading::Touch(true)),
            ("ir", Reading::Proximity(Some(0.3))),
        ]);
        let rules = vec![
            ThresholdRule {
                source: "touch_fl".into(),
                op: CmpOp::Eq,
                value: 1.0,
                event: "BUMP_F".into(),
                payload: false,
            },
            ThresholdRule {
                source: "ir".into(),
                op: CmpOp::Lt,
                value: 0.5,
                event: "OBSTACLE_AHEAD".into(),
                payload: true,
            },
        ];
        let ev = interpret(&r, &rules, &[]);
        assert_eq!(names(&ev), vec!["TICK", "BUMP_F", "OBSTACLE_AHEAD"]);
        assert_eq!(ev[2].payload, Some(Payload::Scalar(0.3)));
    }

    #[test]
    fn interpret_messages() {
        let inbox = vec![Message {
            from: "b".into(),
            to: "a".into(),
            payload: Some(Payload::Scalar(2.0)),
            sent_tick: 0,
        }];
        let ev = interpret(&Readings::default(), &[], &inbox);
        assert_eq!(names(&ev), vec!["TICK", "MSG"]);
        assert_eq!(ev[1].origin, Origin::Message);
    }

    #[test]
    fn reflex_priority() {
        let ev = vec![
            EventInstance::new("A", Origin::Sensor),
            EventInstance::new("B", Origin::Sensor),
        ];
        let rules = vec![
            ReflexRule {
                trigger: "A".into(),
                command: WheelSpeeds::new(1.0, 1.0),
                priority: 1,
            },
            ReflexRule {
                trigger: "B".into(),
                command: WheelSpeeds::new(-1.0, 1.0),
                priority: 5,
            },
            ReflexRule {
                trigger: "C".into(),
                command: WheelSpeeds::new(9.0, 9.0),
                priority: 9,
            },
        ];
        assert_eq!(apply_reflexes(&ev, &rules), Some(WheelSpeeds::new(-1.0, 1.0)));
        assert_eq!(apply_reflexes(&ev[..0], &rules), None);
    }

    #[test]
    fn empty_agent_is_still() {
        let mut a = LayeredAgent::new(&spec(""), Box::new(NullPolicy), 1);
        let out = a.step(0, &Readings::default(), &[]).unwrap();
        assert_eq!(out, AgentOutput::default());
    }

    #[test]
    fn reflex_overrides_csm_then_releases() {
        let mut s = spec("machine m { initial A; state A { on TICK -> A do set_wheels(1, 1) } }");
        s.thresholds.push(ThresholdRule {
            source: "touch".into(),
            op: CmpOp::Eq,
            value: 1.0,
            event: "BUMP_F".into(),
            payload: false,
        });
        s.reflexes.push(ReflexRule {
            trigger: "BUMP_F".into(),
            command: WheelSpeeds::STOP,
            priority: 0,
        });
        let mut a = LayeredAgent::new(&s, Box::new(NullPolicy), 1);
        let hit = readings(vec![("touch", Reading::Touch(true))]);
        let free = readings(vec![("touch", Reading::Touch(false))]);
        assert_eq!(a.step(0, &hit, &[]).unwrap().drive, WheelSpeeds::STOP);
        assert_eq!(a.step(1, &free, &[]).unwrap().drive, WheelSpeeds::new(1.0, 1.0));
    }

    #[test]
    fn drive_command_is_latched() {
        let s = spec("input GO; machine m { initial A; state A { on GO -> B do set_wheels(0.5, -0.5) } state B {} }");
        let mut a = LayeredAgent::new(&s, Box::new(NullPolicy), 1);
        a.pending.push(EventInstance::new("GO", Origin::Strategy));
        assert_eq!(
            a.step(0, &Readings::default(), &[]).unwrap().drive,
            WheelSpeeds::new(0.5, -0.5)
        );
        assert_eq!(
            a.step(1, &Readings::default(), &[]).unwrap().drive,
            WheelSpeeds::new(0.5, -0.5)
        );
    }

    #[test]
    fn pick_resolves_nearest_in_reach() {
        let s = spec("machine m { initial A; state A { on TICK -> A do pick } }");
        let mut a = LayeredAgent::new(&s, Box::new(NullPolicy), 1);
        let sight = |id, distance| Sighting {
            id: ResourceId(id),
            bearing: 0.0,
            distance,
        };
        let r = readings(vec![(
            "eye",
            Reading::Vision(vec![sight(3, 0.29), sight(1, 0.25), sight(2, 0.31)]),
        )]);
        assert_eq!(a.step(0, &r, &[]).unwrap().ops, vec![ResourceOp::Pick(ResourceId(1))]);
        let far = readings(vec![("eye", Reading::Vision(vec![sight(2, 0.31)]))]);
        assert!(a.step(1, &far, &[]).unwrap().ops.is_empty());
    }

    #[test]
    fn history_is_bounded() {
        let mut a = LayeredAgent::new(&spec(""), Box::new(NullPolicy), 1);
        for t in 0..10 {
            a.step(t, &Readings::default(), &[]).unwrap();
        }
        let h: Vec<u64> = a.memory().history().map(|(t, _)| t).collect();
        assert_eq!(h, vec![6, 7, 8, 9]);
    }

    #[test]
    fn csm_error_names_agent_and_tick() {
        let s = spec("var v = 0; machine m { initial A; state A { on TICK -> A do v = 1 / v } }");
        let mut a = LayeredAgent::new(&s, Box::new(NullPolicy), 1);
        let err = a.step(7, &Readings::default(), &[]).unwrap_err();
        assert!(matches!(err, AgentError::Csm { ref agent, tick: 7, .. } if agent == "a"));
    }

    #[test]
    fn seeds_differ_per_agent() {
        assert_ne!(agent_seed(1, 0), agent_seed(1, 1));
        assert_ne!(agent_seed(1, 0), agent_seed(2, 0));
        assert_eq!(agent_seed(5, 3), agent_seed(5, 3));
    }
}
