use serde::{Deserialize, Serialize};

use super::directory::{Directory, GroupCommand, Route};
use super::log::{nums, payload_text, Fnv64, LogHeader, LogWriter, NO_AGENT};
use super::EnvError;
use crate::agent::{AgentMind, AgentOutput, AgentSpec, Attachment, Message, ResourceOp, PICK_MARGIN};
use crate::devices::{
    scan_agents, scan_resources, AgentView, DeviceKind, DriveState, OdometryState, Reading, Readings,
};
use crate::geometry::{
    disc_penetration, move_with_collision, AgentId, Body, Contact, MovingDisc, Pose, ResourceId, ResourceStatus,
    WorldMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub seed: u64,
    pub dt: f64,
    pub near_threshold: f64,
    /// Checksum record every this many ticks.
    pub checkpoint_every: u64,
    /// Pose record every this many ticks; 0 disables pose records.
    pub pose_every: u64,
    pub digest: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub spec: AgentSpec,
    pub attachment: Attachment,
    pub registered_at: u64,
    pub pose: Pose,
    pub drive: DriveState,
    /// One per odometry device, in suite order.
    pub odometry: Vec<OdometryState>,
    /// Contact from this tick's motion.
    pub contact: Option<Contact>,
    pub carrying: Option<ResourceId>,
    pub path_length: f64,
    pub last_output: AgentOutput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theft {
    pub agent: AgentId,
    pub resource: ResourceId,
    pub owner: String,
}

/// What happened during the last tick, for scenario monitors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickEvents {
    pub tick: u64,
    pub picks: Vec<(AgentId, ResourceId)>,
    pub drops: Vec<(AgentId, ResourceId)>,
    pub thefts: Vec<Theft>,
    pub delivered: usize,
}

/// The environment map: world state, registered agents, directory and log.
pub struct EnvironmentMap {
    settings: SimSettings,
    world: WorldMap,
    agents: Vec<AgentState>,
    minds: Vec<Box<dyn AgentMind>>,
    directory: Directory,
    tick: u64,
    mode: Mode,
    /// Messages routed during the previous tick, per recipient.
    pending: Vec<Vec<Message>>,
    log: LogWriter,
    last: TickEvents,
}

impl std::fmt::Debug for EnvironmentMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvironmentMap")
            .field("tick", &self.tick)
            .field("mode", &self.mode)
            .field("agents", &self.agents.len())
            .finish()
    }
}

impl EnvironmentMap {
    pub fn new(settings: SimSettings, world: WorldMap) -> Self {
        let mut log = LogWriter::new(&LogHeader {
            seed: settings.seed,
            digest: settings.digest,
            checkpoint_every: settings.checkpoint_every.max(1),
        });
        log.record(
            0,
            "map",
            NO_AGENT,
            &format!("world {}", nums(&[world.width, world.height])),
        );
        for poly in &world.obstacles {
            let pts: Vec<String> = poly.vertices().iter().map(|v| format!("{},{}", v.x, v.y)).collect();
            log.record(0, "map", NO_AGENT, &format!("obstacle {}", pts.join(" ")));
        }
        for h in &world.homes {
            log.record(
                0,
                "map",
                NO_AGENT,
                &format!("home {} {}", h.owner, nums(&[h.rect.x, h.rect.y, h.rect.w, h.rect.h])),
            );
        }
        for r in &world.resources {
            log.record(
                0,
                "map",
                NO_AGENT,
                &format!("resource {} {}", r.id.0, nums(&[r.position.x, r.position.y])),
            );
        }
        Self {
            settings,
            world,
            agents: Vec::new(),
            minds: Vec::new(),
            directory: Directory::default(),
            tick: 0,
            mode: Mode::Online,
            pending: Vec::new(),
            log,
            last: TickEvents::default(),
        }
    }

    pub fn settings(&self) -> &SimSettings {
        &self.settings
    }

    pub fn world(&self) -> &WorldMap {
        &self.world
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, name: &str) -> Option<&AgentState> {
        self.directory.id(name).map(|id| &self.agents[id.0 as usize])
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    /// Number of completed ticks.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn last_events(&self) -> &TickEvents {
        &self.last
    }

    pub fn log_text(&self) -> &str {
        self.log.text()
    }

    pub fn into_log(self) -> String {
        self.log.into_text()
    }

    /// Tell every mind the run is over.
    pub fn finish(&mut self, reason: &str) {
        for m in &mut self.minds {
            m.finish(reason);
        }
    }

    /// Append a record stamped with the last completed tick.
    pub fn log_record(&mut self, kind: &str, agent: &str, payload: &str) {
        let tick = self.tick.saturating_sub(1);
        self.log.record(tick, kind, agent, payload);
    }

    fn require_online(&self) -> Result<(), EnvError> {
        match self.mode {
            Mode::Online => Ok(()),
            Mode::Offline => Err(EnvError::Offline),
        }
    }

    fn bodies(&self) -> Vec<Body> {
        self.agents
            .iter()
            .map(|a| Body {
                id: a.id,
                position: a.pose.position,
                radius: a.spec.body_radius,
            })
            .collect()
    }

    /// Place an agent on the map and give it a peer.
    pub fn register(
        &mut self,
        spec: AgentSpec,
        attachment: Attachment,
        mind: Box<dyn AgentMind>,
    ) -> Result<AgentId, EnvError> {
        self.require_online()?;
        let pose = spec.initial_pose;
        let r = spec.body_radius;
        let p = pose.position;
        if r.is_nan()
            || r <= 0.0
            || p.x - r < 0.0
            || p.y - r < 0.0
            || p.x + r > self.world.width
            || p.y + r > self.world.height
        {
            return Err(EnvError::Placement {
                name: spec.name.clone(),
                reason: "body is outside the arena".into(),
            });
        }
        if let Some(c) = disc_penetration(&self.world, p, r, None, &self.bodies()) {
            return Err(EnvError::Placement {
                name: spec.name.clone(),
                reason: format!("overlaps {:?}", c.other),
            });
        }
        let id = self.directory.register(&spec.name)?;
        let odometry = spec
            .devices
            .iter()
            .filter_map(|d| match d.kind {
                DeviceKind::Odometry {
                    wheel_radius,
                    ticks_per_rev,
                } => Some(OdometryState::new(wheel_radius, ticks_per_rev)),
                _ => None,
            })
            .collect();
        self.log.record(
            self.tick,
            "register",
            &spec.name,
            &format!("{} {} {}", id.0, nums(&[p.x, p.y, pose.heading, r]), spec.color),
        );
        self.agents.push(AgentState {
            id,
            attachment,
            registered_at: self.tick,
            drive: DriveState::new(spec.drive),
            spec,
            pose,
            odometry,
            contact: None,
            carrying: None,
            path_length: 0.0,
            last_output: AgentOutput::default(),
        });
        self.minds.push(mind);
        self.pending.push(Vec::new());
        Ok(id)
    }

    /// Directory change between ticks; logged so replays see it too.
    pub fn manage_group(&mut self, command: GroupCommand, group: &str, agent: Option<&str>) -> Result<(), EnvError> {
        self.require_online()?;
        let note = self.directory.manage_group(command, group, agent)?;
        let who = agent.unwrap_or(NO_AGENT);
        self.log
            .record(self.tick, "group", who, &format!("{} {group}", command.as_str()));
        if let Some(note) = note {
            self.log.record(self.tick, "warn", who, &note);
        }
        Ok(())
    }

    fn readings_for(&self, idx: usize, bodies: &[Body]) -> Readings {
        let a = &self.agents[idx];
        let views: Vec<AgentView<'_>> = self
            .agents
            .iter()
            .map(|o| AgentView {
                id: o.id,
                name: &o.spec.name,
                pose: o.pose,
                radius: o.spec.body_radius,
            })
            .collect();
        let own = views[idx];
        let mut odo = a.odometry.iter();
        let values = a
            .spec
            .devices
            .iter()
            .map(|d| {
                let reading = match &d.kind {
                    DeviceKind::Floor => Reading::Floor(self.world.floor_brightness(a.pose.position).unwrap_or(0.0)),
                    DeviceKind::Touch(t) => Reading::Touch(t.read(&a.pose, a.contact.as_ref())),
                    DeviceKind::Proximity(p) => {
                        Reading::Proximity(p.read(&self.world, a.id, &a.pose, a.spec.body_radius, bodies))
                    }
                    DeviceKind::Odometry { .. } => {
                        let o = odo.next().expect("one odometry state per device");
                        Reading::Odometry {
                            left: o.reported.0,
                            right: o.reported.1,
                        }
                    }
                    DeviceKind::Scanner { near_threshold } => Reading::Scan(scan_agents(
                        &own,
                        &views,
                        near_threshold.unwrap_or(self.settings.near_threshold),
                    )),
                    DeviceKind::Vision(v) => Reading::Vision(scan_resources(&own, &self.world.resources, v)),
                    DeviceKind::Position => Reading::Position(a.pose),
                    DeviceKind::Gripper => Reading::Gripper(a.carrying),
                };
                (d.name.clone(), reading)
            })
            .collect();
        Readings { values }
    }

    /// Readings an agent would get right now (used by tests and tools).
    pub fn current_readings(&self, name: &str) -> Option<Readings> {
        let id = self.directory.id(name)?;
        Some(self.readings_for(id.0 as usize, &self.bodies()))
    }

    /// Advance one tick through the fixed phase order.
    pub fn tick(&mut self) -> Result<&TickEvents, EnvError> {
        self.require_online()?;
        let t = self.tick;
        let dt = self.settings.dt;
        let mut events = TickEvents {
            tick: t,
            ..TickEvents::default()
        };

        // (1) inertia
        for a in &mut self.agents {
            a.drive = a.drive.apply_inertia(dt);
        }

        // (2) motion in ascending id; later agents see earlier agents' new positions
        let mut bodies = self.bodies();
        for i in 0..self.agents.len() {
            let a = &mut self.agents[i];
            let disc = MovingDisc {
                id: a.id,
                radius: a.spec.body_radius,
                pose: a.pose,
                wheels: a.drive.actual,
                wheel_base: a.drive.params.wheel_base,
            };
            let motion = move_with_collision(&self.world, &disc, dt, &bodies)?;
            let travelled = a.drive.actual.linear().abs() * dt * motion.fraction;
            a.path_length += travelled;
            let effective = crate::geometry::WheelSpeeds::new(
                a.drive.actual.left * motion.fraction,
                a.drive.actual.right * motion.fraction,
            );
            for o in &mut a.odometry {
                *o = o.advance(effective, dt);
            }
            a.pose = motion.pose;
            a.contact = motion.contact;
            bodies[i].position = a.pose.position;
            if let Some(rid) = a.carrying {
                self.world.resources[rid.0 as usize].position = a.pose.position;
            }
        }

        // (3) readings
        let readings: Vec<Readings> = (0..self.agents.len()).map(|i| self.readings_for(i, &bodies)).collect();

        // (4) delivery of messages sent during the previous tick
        let inboxes: Vec<Vec<Message>> = self.pending.iter_mut().map(std::mem::take).collect();
        events.delivered = inboxes.iter().map(Vec::len).sum();

        // (5) agent steps in ascending id
        let mut records: Vec<Vec<(String, String)>> = vec![Vec::new(); self.agents.len()];
        let pose_due = self.settings.pose_every > 0 && t.is_multiple_of(self.settings.pose_every);
        for i in 0..self.agents.len() {
            let out = self.minds[i].step(t, &readings[i], &inboxes[i])?;
            let a = &mut self.agents[i];
            let recs = &mut records[i];
            if pose_due {
                recs.push((
                    "pose".into(),
                    nums(&[a.pose.position.x, a.pose.position.y, a.pose.heading]),
                ));
            }
            for n in &out.notes {
                recs.push(("note".into(), n.clone()));
            }
            recs.push(("cmd".into(), nums(&[out.drive.left, out.drive.right])));
            a.drive.command(out.drive);
            for m in &out.messages {
                recs.push(("send".into(), format!("{} {}", m.to, payload_text(&m.payload))));
                match self.directory.resolve(a.id, &m.to) {
                    Route::Recipients(ids) => {
                        for r in ids {
                            self.pending[r.0 as usize].push(Message {
                                from: a.spec.name.clone(),
                                to: m.to.clone(),
                                payload: m.payload,
                                sent_tick: t,
                            });
                        }
                    }
                    Route::Unknown => {
                        recs.push((
                            "warn".into(),
                            format!("dropped message to unknown destination `{}`", m.to),
                        ));
                    }
                }
            }
            for op in &out.ops {
                recs.push((
                    "op".into(),
                    match op {
                        ResourceOp::Pick(r) => format!("pick {}", r.0),
                        ResourceOp::Drop => "drop".into(),
                    },
                ));
            }
            a.last_output = out;
        }

        // (6) resource operations in ascending id
        for (i, recs) in records.iter_mut().enumerate() {
            let ops = self.agents[i].last_output.ops.clone();
            for op in ops {
                self.apply_op(i, op, recs, &mut events);
            }
        }

        // (7) log
        for (i, recs) in records.into_iter().enumerate() {
            let name = self.agents[i].spec.name.clone();
            for (kind, payload) in recs {
                self.log.record(t, &kind, &name, &payload);
            }
        }
        self.tick += 1;
        let every = self.settings.checkpoint_every.max(1);
        if self.tick.is_multiple_of(every) {
            let sum = self.checksum();
            self.log.record(t, "sum", NO_AGENT, &format!("{sum:016x}"));
        }
        self.last = events;
        Ok(&self.last)
    }

    fn apply_op(&mut self, i: usize, op: ResourceOp, recs: &mut Vec<(String, String)>, events: &mut TickEvents) {
        let agent_id = self.agents[i].id;
        let name = self.agents[i].spec.name.clone();
        let pos = self.agents[i].pose.position;
        match op {
            ResourceOp::Pick(rid) => {
                let reach = self.agents[i].spec.body_radius + PICK_MARGIN;
                let refusal = if self.agents[i].carrying.is_some() {
                    Some("already carrying")
                } else {
                    match self.world.resources.get(rid.0 as usize) {
                        None => Some("no such resource"),
                        Some(r) => match &r.status {
                            ResourceStatus::Carried(_) => Some("resource is carried"),
                            ResourceStatus::Stored(owner) if *owner == name => Some("resource is in own home"),
                            _ if r.position.distance(pos) > reach => Some("out of reach"),
                            _ => None,
                        },
                    }
                };
                if let Some(reason) = refusal {
                    recs.push(("warn".into(), format!("pick {} refused: {reason}", rid.0)));
                    return;
                }
                let r = &mut self.world.resources[rid.0 as usize];
                if let ResourceStatus::Stored(owner) = &r.status {
                    recs.push(("theft".into(), format!("{} {owner}", rid.0)));
                    events.thefts.push(Theft {
                        agent: agent_id,
                        resource: rid,
                        owner: owner.clone(),
                    });
                }
                r.status = ResourceStatus::Carried(agent_id);
                r.position = pos;
                self.agents[i].carrying = Some(rid);
                recs.push(("res".into(), format!("{} carried {name}", rid.0)));
                events.picks.push((agent_id, rid));
            }
            ResourceOp::Drop => {
                let Some(rid) = self.agents[i].carrying.take() else {
                    recs.push(("warn".into(), "drop refused: not carrying".into()));
                    return;
                };
                let status = match self.world.home_containing(pos) {
                    Some(h) => ResourceStatus::Stored(h.owner.clone()),
                    None => ResourceStatus::InField,
                };
                let text = match &status {
                    ResourceStatus::Stored(owner) => format!("stored {owner}"),
                    _ => "field".to_string(),
                };
                let r = &mut self.world.resources[rid.0 as usize];
                r.status = status;
                r.position = pos;
                recs.push(("res".into(), format!("{} {text} {}", rid.0, nums(&[pos.x, pos.y]))));
                events.drops.push((agent_id, rid));
            }
        }
    }

    /// Platform-independent digest of poses, drives and resource states.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write_u64(self.tick);
        for a in &self.agents {
            h.write_u64(u64::from(a.id.0));
            for v in [
                a.pose.position.x,
                a.pose.position.y,
                a.pose.heading,
                a.drive.commanded.left,
                a.drive.commanded.right,
                a.drive.actual.left,
                a.drive.actual.right,
            ] {
                h.write_fixed(v);
            }
            h.write_u64(a.carrying.map_or(0, |r| u64::from(r.0) + 1));
        }
        for r in &self.world.resources {
            match &r.status {
                ResourceStatus::InField => h.write_u64(0),
                ResourceStatus::Carried(id) => {
                    h.write_u64(1);
                    h.write_u64(u64::from(id.0));
                }
                ResourceStatus::Stored(owner) => {
                    h.write_u64(2);
                    h.write(owner.as_bytes());
                }
            }
            h.write_fixed(r.position.x);
            h.write_fixed(r.position.y);
        }
        h.finish()
    }
}
