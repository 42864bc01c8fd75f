// `!(x > 0.0)` is deliberate throughout: NaN must fail the range checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_4;
use std::fmt;

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};

use super::log::Fnv64;
use crate::agent::{AgentSpec, CmpOp, PolicySpec, ReflexRule, ThresholdRule};
use crate::csm::{load_csm, CsmDocument, Diagnostic as CsmDiagnostic};
use crate::devices::{roundie_suite, DeviceKind, DeviceSpec, DriveParams, ProximitySensor, TouchSensor, VisionSensor};
use crate::geometry::{
    disc_penetration, FloorGrid, Home, Polygon, Pose, Rect, Resource, ResourceId, ResourceStatus, Vec2, WheelSpeeds,
    WorldMap,
};
use crate::scenarios;

/// Behavior files referenced by a config, keyed by the name used in `csm="..."`.
pub type Assets = BTreeMap<String, String>;

pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigDiagnostic {
    pub code: String,
    pub message: String,
    /// The behavior file the location refers to; `None` for the config itself.
    pub file: Option<String>,
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for ConfigDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}:{}: [{}] {}", self.line, self.col, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl ScenarioSpec {
    pub fn param_f64(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).and_then(|v| v.parse().ok()).unwrap_or(default)
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub dt: f64,
    pub max_ticks: u64,
    pub near_threshold: f64,
    pub checkpoint_every: u64,
    pub pose_every: u64,
    pub world: WorldMap,
    pub agents: Vec<AgentSpec>,
    pub groups: Vec<GroupSpec>,
    pub scenario: Option<ScenarioSpec>,
    /// Hash of the config text and every referenced behavior file.
    pub digest: u64,
    /// Non-fatal behavior diagnostics.
    pub warnings: Vec<ConfigDiagnostic>,
}

struct Ctx<'a> {
    doc: &'a Document<'a>,
    diags: Vec<ConfigDiagnostic>,
}

impl<'a> Ctx<'a> {
    fn at(&mut self, node: Node, code: &str, message: impl Into<String>) {
        let pos = self.doc.text_pos_at(node.range().start);
        self.diags.push(ConfigDiagnostic {
            code: code.to_string(),
            message: message.into(),
            file: None,
            line: pos.row,
            col: pos.col,
        });
    }

    fn check_attrs(&mut self, node: Node, allowed: &[&str]) {
        for a in node.attributes() {
            if !allowed.contains(&a.name()) {
                let msg = format!("unknown attribute `{}` on <{}>", a.name(), node.tag_name().name());
                self.at(node, "schema", msg);
            }
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, node: Node, name: &str) -> Option<T> {
        let raw = node.attribute(name)?;
        match raw.trim().parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                let msg = format!("attribute `{name}` has invalid value `{raw}`");
                self.at(node, "schema", msg);
                None
            }
        }
    }

    fn required<T: std::str::FromStr>(&mut self, node: Node, name: &str) -> Option<T> {
        if node.attribute(name).is_none() {
            let msg = format!("<{}> requires attribute `{name}`", node.tag_name().name());
            self.at(node, "schema", msg);
            return None;
        }
        self.parse(node, name)
    }

    fn number(&mut self, node: Node, name: &str, default: f64) -> f64 {
        self.parse::<f64>(node, name).unwrap_or(default)
    }

    fn req_number(&mut self, node: Node, name: &str) -> f64 {
        let v = self.required::<f64>(node, name);
        match v {
            Some(v) if !v.is_finite() => {
                self.at(node, "schema", format!("attribute `{name}` must be finite"));
                0.0
            }
            Some(v) => v,
            None => 0.0,
        }
    }
}

fn elements<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|n| n.is_element())
}

/// Behavior files referenced by agents (excluding built-ins), sorted and unique.
pub fn referenced_assets(xml: &str) -> Result<Vec<String>, Vec<ConfigDiagnostic>> {
    let doc = Document::parse(xml).map_err(|e| vec![xml_error(&e)])?;
    let set: BTreeSet<String> = doc
        .descendants()
        .filter(|n| n.has_tag_name("agent"))
        .filter_map(|n| n.attribute("csm"))
        .filter(|c| !c.starts_with(BUILTIN_PREFIX))
        .map(str::to_string)
        .collect();
    Ok(set.into_iter().collect())
}

fn xml_error(e: &roxmltree::Error) -> ConfigDiagnostic {
    let pos = e.pos();
    ConfigDiagnostic {
        code: "xml".into(),
        message: e.to_string(),
        file: None,
        line: pos.row,
        col: pos.col,
    }
}

/// Digest of the config text plus the behavior files it references.
pub fn config_digest(xml: &str, assets: &Assets) -> u64 {
    let mut h = Fnv64::default();
    h.write(xml.as_bytes());
    h.write(&[0]);
    if let Ok(names) = referenced_assets(xml) {
        for name in names {
            if let Some(text) = assets.get(&name) {
                h.write(name.as_bytes());
                h.write(&[0]);
                h.write(text.as_bytes());
                h.write(&[0]);
            }
        }
    }
    h.finish()
}

fn parse_points(text: &str) -> Option<Vec<Vec2>> {
    text.split_whitespace()
        .map(|pair| {
            let (x, y) = pair.split_once(',')?;
            Some(Vec2::new(x.trim().parse().ok()?, y.trim().parse().ok()?))
        })
        .collect()
}

fn load_world(ctx: &mut Ctx, node: Node) -> Option<WorldMap> {
    ctx.check_attrs(node, &["w", "h"]);
    let w = ctx.req_number(node, "w");
    let h = ctx.req_number(node, "h");
    let mut obstacles = Vec::new();
    let mut floor = None;
    let mut homes = Vec::new();
    let mut resources = Vec::new();
    for child in elements(node) {
        match child.tag_name().name() {
            "obstacle" => {
                ctx.check_attrs(child, &["points"]);
                let Some(text) = child.attribute("points") else {
                    ctx.at(child, "schema", "<obstacle> requires attribute `points`");
                    continue;
                };
                match parse_points(text).map(Polygon::new) {
                    Some(Ok(p)) => obstacles.push(p),
                    Some(Err(e)) => ctx.at(child, "world", format!("invalid obstacle: {e}")),
                    None => ctx.at(child, "schema", "points must be `x,y x,y ...`"),
                }
            }
            "rect" => {
                ctx.check_attrs(child, &["x", "y", "w", "h"]);
                let r = Rect::new(
                    ctx.req_number(child, "x"),
                    ctx.req_number(child, "y"),
                    ctx.req_number(child, "w"),
                    ctx.req_number(child, "h"),
                );
                match Polygon::rect(r) {
                    Ok(p) => obstacles.push(p),
                    Err(e) => ctx.at(child, "world", format!("invalid rect: {e}")),
                }
            }
            "floor" => {
                ctx.check_attrs(child, &["rows", "cols", "data"]);
                let rows = ctx.required::<usize>(child, "rows").unwrap_or(1);
                let cols = ctx.required::<usize>(child, "cols").unwrap_or(1);
                let data: Option<Vec<f64>> = child
                    .attribute("data")
                    .unwrap_or("")
                    .split_whitespace()
                    .map(|v| v.parse().ok())
                    .collect();
                match data.map(|d| FloorGrid::new(w, h, rows, cols, d)) {
                    Some(Ok(g)) => floor = Some(g),
                    Some(Err(e)) => ctx.at(child, "world", format!("invalid floor: {e}")),
                    None => ctx.at(child, "schema", "floor data must be numbers"),
                }
            }
            "home" => {
                ctx.check_attrs(child, &["owner", "x", "y", "w", "h"]);
                let owner = child.attribute("owner").unwrap_or_default().to_string();
                if owner.is_empty() {
                    ctx.at(child, "schema", "<home> requires attribute `owner`");
                }
                let rect = Rect::new(
                    ctx.req_number(child, "x"),
                    ctx.req_number(child, "y"),
                    ctx.req_number(child, "w"),
                    ctx.req_number(child, "h"),
                );
                homes.push(Home { owner, rect });
            }
            "resource" => {
                ctx.check_attrs(child, &["x", "y"]);
                let p = Vec2::new(ctx.req_number(child, "x"), ctx.req_number(child, "y"));
                resources.push(Resource {
                    id: ResourceId(resources.len() as u32),
                    position: p,
                    status: ResourceStatus::InField,
                });
            }
            other => ctx.at(child, "schema", format!("unknown element <{other}> in <world>")),
        }
    }
    let floor = match floor {
        Some(f) => f,
        None => match FloorGrid::uniform(w.max(f64::MIN_POSITIVE), h.max(f64::MIN_POSITIVE), 1.0) {
            Ok(f) => f,
            Err(e) => {
                ctx.at(node, "world", e.to_string());
                return None;
            }
        },
    };
    // resources start in homes when dropped there by the config author
    for r in &mut resources {
        if let Some(home) = homes.iter().find(|h| h.rect.contains(r.position)) {
            r.status = ResourceStatus::Stored(home.owner.clone());
        }
    }
    match WorldMap::new(w, h, obstacles, floor, homes, resources) {
        Ok(world) => Some(world),
        Err(e) => {
            ctx.at(node, "world", e.to_string());
            None
        }
    }
}

fn load_device(ctx: &mut Ctx, node: Node, out: &mut Vec<DeviceSpec>) {
    let kind = node.attribute("kind").unwrap_or("");
    if kind == "roundie" {
        ctx.check_attrs(node, &["kind"]);
        out.extend(roundie_suite());
        return;
    }
    let Some(name) = node.attribute("name") else {
        ctx.at(node, "schema", "<device> requires attribute `name`");
        return;
    };
    let kind = match kind {
        "floor" => {
            ctx.check_attrs(node, &["name", "kind"]);
            DeviceKind::Floor
        }
        "touch" => {
            ctx.check_attrs(node, &["name", "kind", "angle", "half_width"]);
            DeviceKind::Touch(TouchSensor {
                center_angle: ctx.number(node, "angle", 0.0),
                half_width: ctx.number(node, "half_width", FRAC_PI_4),
            })
        }
        "proximity" => {
            ctx.check_attrs(node, &["name", "kind", "angle", "range"]);
            DeviceKind::Proximity(ProximitySensor {
                mount_angle: ctx.number(node, "angle", 0.0),
                range: ctx.number(node, "range", 1.0),
            })
        }
        "odometry" => {
            ctx.check_attrs(node, &["name", "kind", "wheel_radius", "ticks_per_rev"]);
            let wheel_radius = ctx.number(node, "wheel_radius", 0.05);
            if !(wheel_radius > 0.0) {
                ctx.at(node, "schema", "wheel_radius must be positive");
            }
            DeviceKind::Odometry {
                wheel_radius,
                ticks_per_rev: ctx.parse(node, "ticks_per_rev").unwrap_or(100),
            }
        }
        "scanner" => {
            ctx.check_attrs(node, &["name", "kind", "near_threshold"]);
            DeviceKind::Scanner {
                near_threshold: ctx.parse(node, "near_threshold"),
            }
        }
        "vision" => {
            ctx.check_attrs(node, &["name", "kind", "range"]);
            DeviceKind::Vision(VisionSensor {
                range: ctx.req_number(node, "range"),
            })
        }
        "position" => {
            ctx.check_attrs(node, &["name", "kind"]);
            DeviceKind::Position
        }
        "gripper" => {
            ctx.check_attrs(node, &["name", "kind"]);
            DeviceKind::Gripper
        }
        other => {
            ctx.at(node, "schema", format!("unknown device kind `{other}`"));
            return;
        }
    };
    out.push(DeviceSpec::new(name, kind));
}

fn csm_diag(file: &str, d: &CsmDiagnostic) -> ConfigDiagnostic {
    ConfigDiagnostic {
        code: d.code.as_str().to_string(),
        message: d.message.clone(),
        file: Some(file.to_string()),
        line: d.line,
        col: d.col,
    }
}

fn load_behavior(
    ctx: &mut Ctx,
    node: Node,
    source: &str,
    assets: &Assets,
    warnings: &mut Vec<ConfigDiagnostic>,
) -> CsmDocument {
    let text = match source.strip_prefix(BUILTIN_PREFIX) {
        Some(name) => scenarios::builtin_behavior(name).map(str::to_string),
        None => assets.get(source).cloned(),
    };
    let Some(text) = text else {
        ctx.at(node, "unknown-asset", format!("behavior `{source}` was not provided"));
        return CsmDocument::default();
    };
    match load_csm(&text) {
        Ok((doc, warns)) => {
            warnings.extend(warns.iter().map(|d| csm_diag(source, d)));
            doc
        }
        Err(diags) => {
            ctx.diags
                .extend(diags.iter().filter(|d| d.is_error()).map(|d| csm_diag(source, d)));
            CsmDocument::default()
        }
    }
}

fn load_agent(ctx: &mut Ctx, node: Node, assets: &Assets, warnings: &mut Vec<ConfigDiagnostic>) -> Option<AgentSpec> {
    ctx.check_attrs(
        node,
        &[
            "name", "color", "radius", "x", "y", "heading", "csm", "strategy", "memory",
        ],
    );
    let name = match node.attribute("name") {
        Some(n) if !n.is_empty() && !n.contains(char::is_whitespace) && n != "*" && n != "-" => n.to_string(),
        _ => {
            ctx.at(node, "schema", "<agent> requires a `name` without whitespace");
            return None;
        }
    };
    let radius = ctx.number(node, "radius", 0.2);
    if !(radius > 0.0) {
        ctx.at(node, "schema", "radius must be positive");
    }
    let pose = Pose::new(
        ctx.req_number(node, "x"),
        ctx.req_number(node, "y"),
        ctx.number(node, "heading", 0.0),
    );
    let behavior_source = node.attribute("csm").unwrap_or("").to_string();
    let behavior = if behavior_source.is_empty() {
        CsmDocument::default()
    } else {
        load_behavior(ctx, node, &behavior_source, assets, warnings)
    };

    let mut drive = DriveParams::default();
    let mut devices = Vec::new();
    let mut explicit_devices = false;
    let mut thresholds = Vec::new();
    let mut reflexes: Vec<ReflexRule> = Vec::new();
    let mut params = BTreeMap::new();
    for child in elements(node) {
        match child.tag_name().name() {
            "drive" => {
                ctx.check_attrs(child, &["base", "max_speed", "max_accel"]);
                drive.wheel_base = ctx.number(child, "base", drive.wheel_base);
                drive.max_speed = ctx.number(child, "max_speed", drive.max_speed);
                drive.max_accel = ctx.number(child, "max_accel", drive.max_accel);
                if !(drive.wheel_base > 0.0 && drive.max_speed >= 0.0 && drive.max_accel > 0.0) {
                    ctx.at(child, "schema", "drive parameters must be positive");
                }
            }
            "device" => {
                explicit_devices = true;
                load_device(ctx, child, &mut devices);
            }
            "threshold" => {
                ctx.check_attrs(child, &["source", "op", "value", "event", "payload"]);
                let op = child.attribute("op").and_then(CmpOp::parse);
                if op.is_none() {
                    ctx.at(child, "schema", "op must be one of lt le gt ge eq ne");
                }
                let rule = ThresholdRule {
                    source: child.attribute("source").unwrap_or("").to_string(),
                    op: op.unwrap_or(CmpOp::Eq),
                    value: ctx.req_number(child, "value"),
                    event: child.attribute("event").unwrap_or("").to_string(),
                    payload: ctx.parse(child, "payload").unwrap_or(false),
                };
                if rule.event.is_empty() {
                    ctx.at(child, "schema", "<threshold> requires attribute `event`");
                }
                thresholds.push((rule, child));
            }
            "reflex" => {
                ctx.check_attrs(child, &["event", "left", "right", "priority"]);
                let rule = ReflexRule {
                    trigger: child.attribute("event").unwrap_or("").to_string(),
                    command: WheelSpeeds::new(ctx.req_number(child, "left"), ctx.req_number(child, "right")),
                    priority: ctx.parse(child, "priority").unwrap_or(0),
                };
                if reflexes.iter().any(|r| r.priority == rule.priority) {
                    ctx.at(
                        child,
                        "duplicate-priority",
                        format!("reflex priority {} is used twice", rule.priority),
                    );
                }
                reflexes.push(rule);
            }
            "param" => {
                ctx.check_attrs(child, &["name", "value"]);
                match (child.attribute("name"), child.attribute("value")) {
                    (Some(n), Some(v)) => {
                        params.insert(n.to_string(), v.to_string());
                    }
                    _ => ctx.at(child, "schema", "<param> requires `name` and `value`"),
                }
            }
            other => ctx.at(child, "schema", format!("unknown element <{other}> in <agent>")),
        }
    }
    if !explicit_devices {
        devices = roundie_suite();
    }
    let mut seen = BTreeSet::new();
    for d in &devices {
        if !seen.insert(d.name.as_str()) {
            ctx.at(node, "duplicate-device", format!("device `{}` declared twice", d.name));
        }
    }

    // thresholds must read an existing channel; events must be known to someone
    let scope: BTreeSet<&str> = behavior.event_scope().into_iter().collect();
    let reflex_triggers: BTreeSet<&str> = reflexes.iter().map(|r| r.trigger.as_str()).collect();
    for (rule, child) in &thresholds {
        let (dev, chan) = match rule.source.split_once('.') {
            Some((d, c)) => (d, Some(c)),
            None => (rule.source.as_str(), None),
        };
        match devices.iter().find(|d| d.name == dev) {
            None => ctx.at(*child, "unknown-source", format!("no device named `{dev}`")),
            Some(d) => {
                if let Some(c) = chan {
                    if !d.kind.channels().contains(&c) {
                        ctx.at(*child, "unknown-source", format!("device `{dev}` has no channel `{c}`"));
                    }
                }
            }
        }
        if !rule.event.is_empty()
            && !scope.contains(rule.event.as_str())
            && !reflex_triggers.contains(rule.event.as_str())
        {
            ctx.at(
                *child,
                "unknown-event",
                format!("event `{}` is not in the behavior's event scope", rule.event),
            );
        }
    }
    let threshold_events: BTreeSet<&str> = thresholds.iter().map(|(r, _)| r.event.as_str()).collect();
    for r in &reflexes {
        if !scope.contains(r.trigger.as_str()) && !threshold_events.contains(r.trigger.as_str()) {
            ctx.at(
                node,
                "unknown-event",
                format!("reflex trigger `{}` is never produced", r.trigger),
            );
        }
    }

    let policy = PolicySpec {
        name: node.attribute("strategy").unwrap_or("null").to_string(),
        params,
    };
    if let Err(e) = scenarios::make_policy(&policy) {
        ctx.at(node, "unknown-policy", e.to_string());
    }
    Some(AgentSpec {
        name,
        color: node.attribute("color").unwrap_or("black").to_string(),
        body_radius: radius,
        initial_pose: pose,
        drive,
        devices,
        behavior_source,
        behavior,
        policy,
        thresholds: thresholds.into_iter().map(|(r, _)| r).collect(),
        reflexes,
        memory_capacity: ctx.parse(node, "memory").unwrap_or(64),
    })
}

/// Parse and validate a run configuration.
pub fn load_config(xml: &str, assets: &Assets) -> Result<RunConfig, Vec<ConfigDiagnostic>> {
    let doc = Document::parse(xml).map_err(|e| vec![xml_error(&e)])?;
    let mut ctx = Ctx {
        doc: &doc,
        diags: Vec::new(),
    };
    let root = doc.root_element();
    if root.tag_name().name() != "jade" {
        ctx.at(root, "schema", "root element must be <jade>");
        return Err(ctx.diags);
    }

    let mut seed = None;
    let (mut dt, mut max_ticks, mut near, mut checkpoint, mut pose_every) = (0.1, 0u64, 1.0, 1u64, 1u64);
    let mut world = None;
    let mut agents: Vec<(AgentSpec, Node)> = Vec::new();
    let mut groups: Vec<(GroupSpec, Node)> = Vec::new();
    let mut scenario = None;
    let mut warnings = Vec::new();
    let mut saw_run = false;

    for node in elements(root) {
        match node.tag_name().name() {
            "run" => {
                saw_run = true;
                ctx.check_attrs(
                    node,
                    &[
                        "seed",
                        "tick",
                        "max_ticks",
                        "near_threshold",
                        "checkpoint_every",
                        "pose_every",
                    ],
                );
                seed = ctx.required::<u64>(node, "seed");
                dt = ctx.number(node, "tick", dt);
                max_ticks = ctx.required::<u64>(node, "max_ticks").unwrap_or(0);
                near = ctx.number(node, "near_threshold", near);
                checkpoint = ctx.parse(node, "checkpoint_every").unwrap_or(1);
                pose_every = ctx.parse(node, "pose_every").unwrap_or(1);
                if !(dt > 0.0 && dt.is_finite()) {
                    ctx.at(node, "schema", "tick must be a positive duration");
                }
                if max_ticks == 0 {
                    ctx.at(node, "schema", "max_ticks must be greater than zero");
                }
                if !(near >= 0.0) {
                    ctx.at(node, "schema", "near_threshold must be non-negative");
                }
                if checkpoint == 0 {
                    ctx.at(node, "schema", "checkpoint_every must be at least 1");
                }
            }
            "world" => world = load_world(&mut ctx, node),
            "scenario" => {
                let params = node
                    .attributes()
                    .filter(|a| a.name() != "name")
                    .map(|a| (a.name().to_string(), a.value().to_string()))
                    .collect();
                match node.attribute("name") {
                    Some(name) => {
                        scenario = Some((
                            ScenarioSpec {
                                name: name.to_string(),
                                params,
                            },
                            node,
                        ))
                    }
                    None => ctx.at(node, "schema", "<scenario> requires attribute `name`"),
                }
            }
            "group" => {
                ctx.check_attrs(node, &["name", "members"]);
                let g = GroupSpec {
                    name: node.attribute("name").unwrap_or("").to_string(),
                    members: node
                        .attribute("members")
                        .unwrap_or("")
                        .split_whitespace()
                        .map(str::to_string)
                        .collect(),
                };
                groups.push((g, node));
            }
            "agent" => {
                if let Some(a) = load_agent(&mut ctx, node, assets, &mut warnings) {
                    agents.push((a, node));
                }
            }
            other => ctx.at(node, "schema", format!("unknown element <{other}>")),
        }
    }
    if !saw_run {
        ctx.at(root, "schema", "missing <run> element");
    }
    let Some(world) = world else {
        if !doc.descendants().any(|n| n.has_tag_name("world")) {
            ctx.at(root, "schema", "missing <world> element");
        }
        return Err(ctx.diags);
    };

    let mut names = BTreeSet::new();
    for (a, node) in &agents {
        if !names.insert(a.name.as_str()) {
            ctx.at(
                *node,
                "duplicate-name",
                format!("agent name `{}` is used twice", a.name),
            );
        }
    }
    for (i, (a, node)) in agents.iter().enumerate() {
        let p = a.initial_pose.position;
        let r = a.body_radius;
        let outside = p.x - r < 0.0 || p.y - r < 0.0 || p.x + r > world.width || p.y + r > world.height;
        if outside || disc_penetration(&world, p, r, None, &[]).is_some() {
            ctx.at(
                *node,
                "initial-collision",
                format!("agent `{}` starts outside the arena or inside an obstacle", a.name),
            );
        }
        for (b, _) in &agents[..i] {
            if p.distance(b.initial_pose.position) < r + b.body_radius {
                ctx.at(
                    *node,
                    "overlapping-poses",
                    format!("agents `{}` and `{}` overlap initially", b.name, a.name),
                );
            }
        }
    }
    for r in &world.resources {
        if disc_penetration(&world, r.position, 1e-9, None, &[]).is_some() {
            ctx.at(root, "world", format!("resource {} lies inside an obstacle", r.id.0));
        }
    }
    let mut group_names = BTreeSet::new();
    for (g, node) in &groups {
        if g.name.is_empty() || names.contains(g.name.as_str()) || g.name == "*" || !group_names.insert(g.name.clone())
        {
            ctx.at(*node, "group", format!("invalid or duplicate group name `{}`", g.name));
        }
        for m in &g.members {
            if !names.contains(m.as_str()) {
                ctx.at(*node, "group", format!("group member `{m}` is not an agent"));
            }
        }
    }
    if let Some((s, node)) = &scenario {
        let specs: Vec<AgentSpec> = agents.iter().map(|(a, _)| a.clone()).collect();
        match scenarios::check_scenario(s, &specs) {
            Ok(notes) => {
                let pos = doc.text_pos_at(node.range().start);
                warnings.extend(notes.into_iter().map(|message| ConfigDiagnostic {
                    code: "scenario".into(),
                    message,
                    file: None,
                    line: pos.row,
                    col: pos.col,
                }));
            }
            Err(message) => ctx.at(*node, "scenario", message),
        }
    }

    if !ctx.diags.is_empty() {
        return Err(ctx.diags);
    }
    Ok(RunConfig {
        seed: seed.unwrap_or(0),
        dt,
        max_ticks,
        near_threshold: near,
        checkpoint_every: checkpoint,
        pose_every,
        world,
        agents: agents.into_iter().map(|(a, _)| a).collect(),
        groups: groups.into_iter().map(|(g, _)| g).collect(),
        scenario: scenario.map(|(s, _)| s),
        digest: config_digest(xml, assets),
        warnings,
    })
}
