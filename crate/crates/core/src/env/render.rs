use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::log::{parse_f64, parse_log, LogError, Record};
use crate::geometry::{Pose, Vec2};

/// Pixels per world unit.
const SCALE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// One document for the whole run.
    Overview,
    /// One document per block of this many ticks.
    Every(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceAgent {
    pub name: String,
    pub color: String,
    pub radius: f64,
    /// Initial pose at tick 0, then one entry per pose record.
    pub poses: Vec<(u64, Pose)>,
}

#[derive(Debug, Clone, PartialEq)]
enum ResState {
    At(Vec2),
    Carried(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResource {
    pub id: u32,
    states: Vec<(u64, ResState)>,
}

/// Everything needed to draw a run, reconstructed from its log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Vec<Vec2>>,
    pub homes: Vec<(String, [f64; 4])>,
    pub agents: Vec<TraceAgent>,
    pub resources: Vec<TraceResource>,
    pub marks: Vec<(u64, Vec2, String)>,
    /// Number of completed ticks.
    pub ticks: u64,
}

fn bad(r: &Record, what: &str) -> LogError {
    LogError::Record {
        line: 0,
        message: format!("tick {} {} record: {what}", r.tick, r.kind),
    }
}

fn floats(r: &Record, fields: &[&str]) -> Result<Vec<f64>, LogError> {
    fields.iter().map(|f| parse_f64(f).map_err(|e| bad(r, &e))).collect()
}

fn point(r: &Record, s: &str) -> Result<Vec2, LogError> {
    let (x, y) = s.split_once(',').ok_or_else(|| bad(r, "expected x,y"))?;
    let v = floats(r, &[x, y])?;
    Ok(Vec2::new(v[0], v[1]))
}

impl Trace {
    pub fn from_log(text: &str) -> Result<Trace, LogError> {
        let log = parse_log(text)?;
        let mut t = Trace::default();
        for r in &log.records {
            let f = r.fields();
            match (r.kind.as_str(), f.as_slice()) {
                ("map", ["world", w, h]) => {
                    let v = floats(r, &[w, h])?;
                    (t.width, t.height) = (v[0], v[1]);
                }
                ("map", ["obstacle", pts @ ..]) => {
                    t.obstacles
                        .push(pts.iter().map(|p| point(r, p)).collect::<Result<_, _>>()?);
                }
                ("map", ["home", owner, rest @ ..]) if rest.len() == 4 => {
                    let v = floats(r, rest)?;
                    t.homes.push((owner.to_string(), [v[0], v[1], v[2], v[3]]));
                }
                ("map", ["resource", id, x, y]) => {
                    let v = floats(r, &[x, y])?;
                    t.resources.push(TraceResource {
                        id: id.parse().map_err(|_| bad(r, "bad id"))?,
                        states: vec![(0, ResState::At(Vec2::new(v[0], v[1])))],
                    });
                }
                ("register", [_, x, y, h, radius, color]) => {
                    let v = floats(r, &[x, y, h, radius])?;
                    t.agents.push(TraceAgent {
                        name: r.agent.clone(),
                        color: color.to_string(),
                        radius: v[3],
                        poses: vec![(r.tick, Pose::new(v[0], v[1], v[2]))],
                    });
                }
                ("pose", [x, y, h]) => {
                    let v = floats(r, &[x, y, h])?;
                    let a = t
                        .agents
                        .iter_mut()
                        .find(|a| a.name == r.agent)
                        .ok_or_else(|| bad(r, "unknown agent"))?;
                    a.poses.push((r.tick, Pose::new(v[0], v[1], v[2])));
                }
                ("res", [id, "carried", who]) => {
                    let res = t.resource_mut(r, id)?;
                    res.states.push((r.tick, ResState::Carried(who.to_string())));
                }
                ("res", [id, _, _, x, y]) | ("res", [id, "field", x, y]) => {
                    let v = floats(r, &[x, y])?;
                    let res = t.resource_mut(r, id)?;
                    res.states.push((r.tick, ResState::At(Vec2::new(v[0], v[1]))));
                }
                ("mark", [x, y, label @ ..]) => {
                    let v = floats(r, &[x, y])?;
                    t.marks.push((r.tick, Vec2::new(v[0], v[1]), label.join(" ")));
                }
                ("end", _) => {
                    if let Some(n) = f.iter().find_map(|s| s.strip_prefix("ticks=")) {
                        t.ticks = n.parse().map_err(|_| bad(r, "bad tick count"))?;
                    }
                }
                _ => {}
            }
            if !matches!(r.kind.as_str(), "map" | "register" | "group" | "end") {
                t.ticks = t.ticks.max(r.tick + 1);
            }
        }
        Ok(t)
    }

    fn resource_mut(&mut self, r: &Record, id: &str) -> Result<&mut TraceResource, LogError> {
        let id: u32 = id.parse().map_err(|_| bad(r, "bad resource id"))?;
        self.resources
            .iter_mut()
            .find(|x| x.id == id)
            .ok_or_else(|| bad(r, "unknown resource"))
    }

    fn pose_at(agent: &TraceAgent, tick: u64) -> Pose {
        agent
            .poses
            .iter()
            .take_while(|(t, _)| *t <= tick)
            .last()
            .map_or(agent.poses[0].1, |(_, p)| *p)
    }

    fn resource_at(&self, res: &TraceResource, tick: u64) -> Vec2 {
        match res.states.iter().take_while(|(t, _)| *t <= tick).last() {
            Some((_, ResState::At(p))) => *p,
            Some((_, ResState::Carried(who))) => self
                .agents
                .iter()
                .find(|a| a.name == *who)
                .map_or(Vec2::ZERO, |a| Self::pose_at(a, tick).position),
            None => Vec2::ZERO,
        }
    }

    /// Draw the state at `tick` with trajectories up to it.
    pub fn svg(&self, tick: u64) -> String {
        let (w, h) = (self.width * SCALE, self.height * SCALE);
        let x = |v: f64| v * SCALE;
        let y = |v: f64| (self.height - v) * SCALE;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
        );
        let _ = writeln!(
            s,
            r##"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="#ffffff" stroke="#000000"/>"##
        );
        for (owner, [hx, hy, hw, hh]) in &self.homes {
            let _ = writeln!(
                s,
                r##"<rect class="home" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#f3e9c6" stroke="#b59b45"><title>{}</title></rect>"##,
                x(*hx),
                y(hy + hh),
                hw * SCALE,
                hh * SCALE,
                xml_text(owner)
            );
        }
        for poly in &self.obstacles {
            let pts: Vec<String> = poly.iter().map(|p| format!("{:.2},{:.2}", x(p.x), y(p.y))).collect();
            let _ = writeln!(
                s,
                r##"<polygon class="obstacle" points="{}" fill="#808080"/>"##,
                pts.join(" ")
            );
        }
        for a in &self.agents {
            let mut pts: Vec<(String, String)> = Vec::new();
            for (_, p) in a.poses.iter().take_while(|(t, _)| *t <= tick) {
                let pt = (format!("{:.2}", x(p.position.x)), format!("{:.2}", y(p.position.y)));
                if pts.last() != Some(&pt) {
                    pts.push(pt);
                }
            }
            if pts.len() >= 2 {
                let joined: Vec<String> = pts.iter().map(|(a, b)| format!("{a},{b}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline class="trajectory" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    joined.join(" "),
                    xml_text(&a.color)
                );
            }
        }
        for res in &self.resources {
            let p = self.resource_at(res, tick);
            let _ = writeln!(
                s,
                r##"<circle class="resource" cx="{:.2}" cy="{:.2}" r="3" fill="#c0392b"/>"##,
                x(p.x),
                y(p.y)
            );
        }
        for a in &self.agents {
            let p = Self::pose_at(a, tick);
            let tip = p.position + Vec2::from_angle(p.heading) * a.radius;
            let _ = writeln!(
                s,
                r##"<circle class="agent" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{}" fill-opacity="0.6" stroke="#000000"><title>{}</title></circle>"##,
                x(p.position.x),
                y(p.position.y),
                a.radius * SCALE,
                xml_text(&a.color),
                xml_text(&a.name)
            );
            let _ = writeln!(
                s,
                r##"<line class="heading" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000" stroke-width="2"/>"##,
                x(p.position.x),
                y(p.position.y),
                x(tip.x),
                y(tip.y)
            );
        }
        for (_, p, label) in self.marks.iter().filter(|(t, _, _)| *t <= tick) {
            let (cx, cy) = (x(p.x), y(p.y));
            let _ = writeln!(
                s,
                r##"<path class="mark" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#e67e22" stroke-width="3"><title>{}</title></path>"##,
                cx - 6.0,
                cy - 6.0,
                cx + 6.0,
                cy + 6.0,
                cx - 6.0,
                cy + 6.0,
                cx + 6.0,
                cy - 6.0,
                xml_text(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_text(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Render a log as SVG documents.
pub fn render_trace(log: &str, mode: RenderMode) -> Result<Vec<String>, LogError> {
    let trace = Trace::from_log(log)?;
    let last = trace.ticks.saturating_sub(1);
    Ok(match mode {
        RenderMode::Overview => vec![trace.svg(last)],
        RenderMode::Every(n) => {
            let n = n.max(1);
            (0..trace.ticks.div_ceil(n))
                .map(|k| trace.svg(((k + 1) * n - 1).min(last)))
                .collect()
        }
    })
}
