//! Leaderless formations: a regular polygon and a chain between two anchors.
//!
//! Each agent only sees the others through its scanner. The step rules return
//! a world-frame target velocity; the policies turn it into wheel speeds and
//! hand them to the formation behavior through memory.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{event, require_agent, scanned_neighbors, scenario_f64, scenario_only, track_velocity, Params};
use crate::agent::{AgentError, AgentSpec, Policy, PolicyContext};
use crate::csm::EventInstance;
use crate::env::{EnvironmentMap, Monitor, MonitorEvent, RunConfig, ScenarioSpec};
use crate::geometry::Vec2;

/// Velocities shorter than this are reported as exactly zero.
pub const DEADBAND: f64 = 1e-9;

/// Gain from position error to velocity, per time unit.
const GAIN: f64 = 1.0;

fn settle(v: Vec2, max_speed: f64) -> Vec2 {
    if v.length() < DEADBAND {
        Vec2::ZERO
    } else {
        v.clamp_length(max_speed)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn stdev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Circle rule. `neighbors` are the known agents relative to self.
///
/// The centroid of self and the known agents is the estimated centre. The
/// radial term pulls self to distance `radius` from it; the tangential term
/// moves self toward the angular midpoint of its two angular neighbours.
pub fn circle_step(neighbors: &[Vec2], radius: f64, max_speed: f64) -> Vec2 {
    if neighbors.len() < 2 {
        return Vec2::ZERO;
    }
    let centre = neighbors.iter().fold(Vec2::ZERO, |acc, p| acc + *p) / (neighbors.len() + 1) as f64;
    let me = -centre;
    let Some(out) = me.normalized() else {
        // sitting on the centre: any direction is as good as another
        return settle(Vec2::new(radius * GAIN, 0.0), max_speed);
    };
    let radial = out * ((radius - me.length()) * GAIN);

    let own = me.angle();
    let (mut ahead, mut behind) = (TAU, TAU);
    for p in neighbors {
        let gap = (*p - centre).angle() - own;
        let ccw = gap.rem_euclid(TAU);
        let cw = (-gap).rem_euclid(TAU);
        if ccw > 0.0 {
            ahead = ahead.min(ccw);
        }
        if cw > 0.0 {
            behind = behind.min(cw);
        }
    }
    let shift = (ahead - behind) / 2.0;
    let tangential = out.perp() * (shift * radius * GAIN);
    settle(radial + tangential, max_speed)
}

/// Chain rule: head for the midpoint of the two chain neighbours. An anchor
/// stands in for a missing neighbour at either end.
pub fn chain_step(me: Vec2, prev: Vec2, next: Vec2, max_speed: f64) -> Vec2 {
    let mid = (prev + next) * 0.5;
    settle((mid - me) * GAIN, max_speed)
}

/// Chain neighbours of `me` among `others`, ordered by projection onto AB.
pub fn chain_neighbors(me: Vec2, others: &[Vec2], a: Vec2, b: Vec2) -> (Vec2, Vec2) {
    let axis = b - a;
    let t = |p: Vec2| (p - a).dot(axis);
    let mine = t(me);
    let mut prev = (f64::NEG_INFINITY, a);
    let mut next = (f64::INFINITY, b);
    for &p in others {
        let tp = t(p);
        if tp < mine && tp > prev.0 {
            prev = (tp, p);
        } else if tp >= mine && tp < next.0 {
            next = (tp, p);
        }
    }
    (prev.1, next.1)
}

/// Signed distance of `p` from the line through `a` and `b`, positive on the left.
pub fn side(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let axis = (b - a) / a.distance(b);
    axis.cross(p - a)
}

/// Distance of `p` from the line through `a` and `b`.
pub fn deviation(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    side(p, a, b).abs()
}

/// Spread of radii plus spread of angular gaps, both relative. Zero for a
/// regular polygon of circumradius `radius`; infinite for degenerate input.
pub fn circle_error(positions: &[Vec2], radius: f64) -> f64 {
    let n = positions.len();
    if n < 3 || radius <= 0.0 {
        return f64::INFINITY;
    }
    let c = positions.iter().fold(Vec2::ZERO, |acc, p| acc + *p) / n as f64;
    let dists: Vec<f64> = positions.iter().map(|p| p.distance(c)).collect();
    if dists.iter().all(|d| *d < 1e-12) {
        return f64::INFINITY;
    }
    let mut angles: Vec<f64> = positions.iter().map(|p| (*p - c).angle()).collect();
    angles.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(angles[0] + TAU - angles[n - 1]);
    stdev(&dists) / radius + stdev(&gaps) / (TAU / n as f64)
}

/// Largest deviation from AB plus spread of consecutive spacings along the
/// chain A, p1..pn, B, both relative. Infinite for degenerate input.
pub fn chain_error(positions: &[Vec2], a: Vec2, b: Vec2) -> f64 {
    let n = positions.len();
    let len = a.distance(b);
    if n == 0 || len == 0.0 {
        return f64::INFINITY;
    }
    if n > 1 && positions.iter().all(|p| p.distance(positions[0]) < 1e-12) {
        return f64::INFINITY;
    }
    let axis = b - a;
    let mut sorted = positions.to_vec();
    sorted.sort_by(|p, q| (*p - a).dot(axis).total_cmp(&(*q - a).dot(axis)));
    let max_dev = sorted.iter().map(|p| deviation(*p, a, b)).fold(0.0, f64::max);
    let mut chain = vec![a];
    chain.extend(sorted);
    chain.push(b);
    let spacings: Vec<f64> = chain.windows(2).map(|w| w[0].distance(w[1])).collect();
    max_dev / len + stdev(&spacings) / (len / (n + 1) as f64)
}

fn write_drive(ctx: &mut PolicyContext<'_>, l: f64, r: f64) -> Vec<EventInstance> {
    ctx.memory.set_scalar("drive_l", l);
    ctx.memory.set_scalar("drive_r", r);
    vec![event("TARGET")]
}

/// Circle formation policy with knowledge of the `k` nearest agents.
#[derive(Debug)]
pub struct CirclePolicy {
    radius: f64,
    k: Option<usize>,
    tick: f64,
}

impl CirclePolicy {
    pub(crate) fn from_params(p: &Params<'_>) -> Result<Self, AgentError> {
        p.only(&["radius", "k", "tick"])?;
        let k = p.opt_f64("k")?.map(|k| k.max(0.0) as usize);
        Ok(Self {
            radius: p.f64("radius", 3.0)?,
            k,
            tick: p.f64("tick", 0.1)?,
        })
    }
}

impl Policy for CirclePolicy {
    fn name(&self) -> &str {
        "circle"
    }

    fn prestep(&mut self, ctx: &mut PolicyContext<'_>) -> Vec<EventInstance> {
        let Some((pose, others)) = scanned_neighbors(ctx.readings) else {
            return Vec::new();
        };
        let mut rel: Vec<Vec2> = others.iter().map(|(_, p)| *p - pose.position).collect();
        rel.sort_by(|a, b| a.length().total_cmp(&b.length()));
        if let Some(k) = self.k {
            rel.truncate(k);
        }
        let v = circle_step(&rel, self.radius, ctx.drive.max_speed);
        let (l, r) = track_velocity(pose, v, ctx.drive.wheel_base, ctx.drive.max_speed, self.tick);
        write_drive(ctx, l, r)
    }
}

/// Chain formation policy between fixed anchors.
#[derive(Debug)]
pub struct ChainPolicy {
    a: Vec2,
    b: Vec2,
    tick: f64,
}

impl ChainPolicy {
    pub(crate) fn from_params(p: &Params<'_>) -> Result<Self, AgentError> {
        p.only(&["a", "b", "tick"])?;
        Ok(Self {
            a: p.point("a")?.unwrap_or(Vec2::new(0.0, 0.0)),
            b: p.point("b")?.unwrap_or(Vec2::new(10.0, 0.0)),
            tick: p.f64("tick", 0.1)?,
        })
    }
}

impl Policy for ChainPolicy {
    fn name(&self) -> &str {
        "chain"
    }

    fn prestep(&mut self, ctx: &mut PolicyContext<'_>) -> Vec<EventInstance> {
        let Some((pose, others)) = scanned_neighbors(ctx.readings) else {
            return Vec::new();
        };
        let me = pose.position;
        let others: Vec<Vec2> = others.into_iter().map(|(_, p)| p).collect();
        let (prev, next) = chain_neighbors(me, &others, self.a, self.b);
        let v = chain_step(me, prev, next, ctx.drive.max_speed);
        let (mut l, mut r) = track_velocity(pose, v, ctx.drive.wheel_base, ctx.drive.max_speed, self.tick);

        // Straight steps are shortened so they never end further off AB than
        // self or its target already are. The largest deviation in the chain
        // then cannot grow, whatever the heading error.
        if l == r && l != 0.0 {
            let mid = (prev + next) * 0.5;
            let s = side(me, self.a, self.b);
            let bound = s.abs().max(deviation(mid, self.a, self.b));
            let axis = (self.b - self.a) / self.a.distance(self.b);
            let drift = axis.cross(Vec2::from_angle(pose.heading)) * l * self.tick;
            if (s + drift).abs() > bound {
                let room = if s * drift >= 0.0 {
                    bound - s.abs()
                } else {
                    bound + s.abs()
                };
                l *= (room / drift.abs()).clamp(0.0, 1.0);
                r = l;
            }
        }
        write_drive(ctx, l, r)
    }
}

pub(crate) fn check(spec: &ScenarioSpec, agents: &[AgentSpec]) -> Result<Vec<String>, String> {
    match spec.name.as_str() {
        "circle" => {
            scenario_only(spec, &["radius", "until"])?;
            if scenario_f64(spec, "radius", 3.0)? <= 0.0 {
                return Err("circle radius must be positive".into());
            }
            if agents.len() < 3 {
                return Err(format!("a circle needs at least 3 agents, got {}", agents.len()));
            }
        }
        _ => {
            scenario_only(spec, &["a", "b", "until"])?;
            let (a, b) = chain_anchors(spec)?;
            if a == b {
                return Err("chain anchors must differ".into());
            }
            if agents.is_empty() {
                return Err("a chain needs at least one agent".into());
            }
        }
    }
    for a in agents {
        require_agent(agents, &a.name, "formation")?;
    }
    Ok(Vec::new())
}

fn chain_anchors(spec: &ScenarioSpec) -> Result<(Vec2, Vec2), String> {
    let point = |key: &str, default: Vec2| -> Result<Vec2, String> {
        match spec.param(key) {
            None => Ok(default),
            Some(v) => v
                .split_once(',')
                .and_then(|(x, y)| Some(Vec2::new(x.trim().parse().ok()?, y.trim().parse().ok()?)))
                .filter(|p| p.is_finite())
                .ok_or_else(|| format!("scenario parameter `{key}` is not a point `x,y`: `{v}`")),
        }
    };
    Ok((point("a", Vec2::new(0.0, 0.0))?, point("b", Vec2::new(10.0, 0.0))?))
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Circle { radius: f64 },
    Chain { a: Vec2, b: Vec2 },
}

/// Tracks the formation error and, for chains, the largest deviation from AB.
pub struct FormationMonitor {
    shape: Shape,
    /// Stop once the error falls below this.
    target: Option<f64>,
    error: f64,
    converged_at: Option<u64>,
    max_deviation: Vec<f64>,
}

impl FormationMonitor {
    pub fn circle(spec: &ScenarioSpec, _config: &RunConfig) -> Self {
        Self::new(
            Shape::Circle {
                radius: scenario_f64(spec, "radius", 3.0).unwrap_or(3.0),
            },
            spec,
        )
    }

    pub fn chain(spec: &ScenarioSpec, _config: &RunConfig) -> Self {
        let (a, b) = chain_anchors(spec).unwrap_or((Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)));
        Self::new(Shape::Chain { a, b }, spec)
    }

    fn new(shape: Shape, spec: &ScenarioSpec) -> Self {
        Self {
            shape,
            target: spec.param("until").and_then(|v| v.parse().ok()),
            error: f64::INFINITY,
            converged_at: None,
            max_deviation: Vec::new(),
        }
    }

    pub fn error_of(&self, env: &EnvironmentMap) -> f64 {
        let ps: Vec<Vec2> = env.agents().iter().map(|a| a.pose.position).collect();
        match self.shape {
            Shape::Circle { radius } => circle_error(&ps, radius),
            Shape::Chain { a, b } => chain_error(&ps, a, b),
        }
    }
}

impl Monitor for FormationMonitor {
    fn after_tick(&mut self, env: &EnvironmentMap) -> Vec<MonitorEvent> {
        self.error = self.error_of(env);
        if let Shape::Chain { a, b } = self.shape {
            let dev = env
                .agents()
                .iter()
                .map(|x| deviation(x.pose.position, a, b))
                .fold(0.0, f64::max);
            self.max_deviation.push(dev);
        }
        let mut out = Vec::new();
        if let Some(limit) = self.target {
            if self.converged_at.is_none() && self.error < limit {
                self.converged_at = Some(env.tick_count() - 1);
                out.push(MonitorEvent::Stop("converged".into()));
            }
        }
        out
    }

    fn metrics(&self, _env: &EnvironmentMap) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("error".into(), self.error);
        if let Some(t) = self.converged_at {
            m.insert("converged_tick".into(), t as f64);
        }
        if !self.max_deviation.is_empty() {
            let rises = self.max_deviation.windows(2).filter(|w| w[1] > w[0] + 1e-9).count();
            m.insert("deviation_rises".into(), rises as f64);
        }
        m
    }
}

/// Knobs for a generated formation run.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationParams {
    pub n: usize,
    pub radius: f64,
    /// Known neighbours per agent; everyone when absent.
    pub k: Option<usize>,
    pub a: Vec2,
    pub b: Vec2,
    pub max_ticks: u64,
    pub pose_every: u64,
    /// Stop the run once the error drops below this.
    pub until: Option<f64>,
    /// Side of the square the agents start in, centred on the target.
    pub spread: f64,
}

impl Default for FormationParams {
    fn default() -> Self {
        Self {
            n: 6,
            radius: 3.0,
            k: None,
            a: Vec2::new(2.0, 6.0),
            b: Vec2::new(12.0, 6.0),
            max_ticks: 20_000,
            pose_every: 1,
            until: None,
            spread: 8.0,
        }
    }
}

fn random_starts(n: usize, centre: Vec2, spread: f64, rng: &mut ChaCha8Rng) -> Vec<(Vec2, f64)> {
    let mut out: Vec<(Vec2, f64)> = Vec::new();
    while out.len() < n {
        let p = centre
            + Vec2::new(
                rng.gen_range(-spread / 2.0..spread / 2.0),
                rng.gen_range(-spread / 2.0..spread / 2.0),
            );
        if out.iter().all(|(q, _)| q.distance(p) > 0.6) {
            out.push((p, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)));
        }
    }
    out
}

fn formation_xml(
    kind: &str,
    scenario_attrs: &str,
    policy_params: &[(&str, String)],
    p: &FormationParams,
    seed: u64,
    centre: Vec2,
    world: f64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF0_4E47);
    let starts = random_starts(p.n, centre, p.spread, &mut rng);
    let mut s = String::new();
    let _ = writeln!(s, "<jade>");
    let _ = writeln!(
        s,
        r#"  <run seed="{seed}" tick="0.1" max_ticks="{}" near_threshold="{}" pose_every="{}"/>"#,
        p.max_ticks,
        world * 2.0,
        p.pose_every
    );
    let _ = writeln!(s, r#"  <world w="{world}" h="{world}"/>"#);
    let until = p.until.map(|u| format!(r#" until="{u}""#)).unwrap_or_default();
    let _ = writeln!(s, r#"  <scenario name="{kind}"{scenario_attrs}{until}/>"#);
    for (i, (pos, h)) in starts.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"  <agent name="f{i}" color="blue" x="{:.4}" y="{:.4}" heading="{h:.4}" csm="builtin:formation" strategy="{kind}">"#,
            pos.x, pos.y
        );
        let _ = writeln!(s, r#"    <drive max_speed="0.5" max_accel="inf"/>"#);
        let _ = writeln!(s, r#"    <device name="pos" kind="position"/>"#);
        let _ = writeln!(s, r#"    <device name="scan" kind="scanner"/>"#);
        for (k, v) in policy_params {
            let _ = writeln!(s, r#"    <param name="{k}" value="{v}"/>"#);
        }
        let _ = writeln!(s, "  </agent>");
    }
    let _ = writeln!(s, "</jade>");
    s
}

/// Run config for a circle formation about the arena centre.
pub fn circle_config(p: &FormationParams, seed: u64) -> String {
    let world = (p.radius * 2.0 + p.spread).max(10.0) + 4.0;
    let mut params = vec![("radius", p.radius.to_string())];
    if let Some(k) = p.k {
        params.push(("k", k.to_string()));
    }
    formation_xml(
        "circle",
        &format!(r#" radius="{}""#, p.radius),
        &params,
        p,
        seed,
        Vec2::new(world / 2.0, world / 2.0),
        world,
    )
}

/// Run config for a chain between `p.a` and `p.b`.
pub fn chain_config(p: &FormationParams, seed: u64) -> String {
    let world = p.a.x.max(p.b.x).max(p.a.y).max(p.b.y) + 2.0;
    let a = format!("{},{}", p.a.x, p.a.y);
    let b = format!("{},{}", p.b.x, p.b.y);
    let centre = (p.a + p.b) * 0.5;
    let spread = p
        .spread
        .min(2.0 * centre.x.min(centre.y).min(world - centre.x).min(world - centre.y) - 1.0);
    let p = FormationParams { spread, ..p.clone() };
    formation_xml(
        "chain",
        &format!(r#" a="{a}" b="{b}""#),
        &[("a", a.clone()), ("b", b.clone())],
        &p,
        seed,
        centre,
        world,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polygon(n: usize, r: f64, c: Vec2, phase: f64) -> Vec<Vec2> {
        (0..n)
            .map(|i| c + Vec2::from_angle(phase + TAU * i as f64 / n as f64) * r)
            .collect()
    }

    #[test]
    fn regular_polygon_is_a_fixed_point() {
        for n in [3, 6, 8] {
            let ps = polygon(n, 3.0, Vec2::new(7.0, 7.0), 0.3);
            for (i, me) in ps.iter().enumerate() {
                let rel: Vec<Vec2> = ps
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, p)| *p - *me)
                    .collect();
                assert_eq!(circle_step(&rel, 3.0, 1.0), Vec2::ZERO, "n={n} i={i}");
            }
            assert!(circle_error(&ps, 3.0) < 1e-12);
        }
    }

    #[test]
    fn clustered_on_circle_moves_tangentially() {
        let c = Vec2::ZERO;
        // self at angle 0, neighbours bunched on one side but centroid kept at c
        let ps = [0.0_f64, 0.4, 2.0, 3.6, 4.0].map(|a| c + Vec2::from_angle(a) * 3.0);
        let centroid = ps.iter().fold(Vec2::ZERO, |acc, p| acc + *p) / 5.0;
        let shifted: Vec<Vec2> = ps.iter().map(|p| *p - centroid).collect();
        let me = shifted[0];
        let rel: Vec<Vec2> = shifted[1..].iter().map(|p| *p - me).collect();
        let v = circle_step(&rel, me.length(), 10.0);
        let out = me.normalized().unwrap();
        assert!(v.dot(out).abs() < 1e-9, "radial part {}", v.dot(out));
        assert!(v.length() > 0.0);
    }

    #[test]
    fn too_few_neighbors_hold() {
        assert_eq!(circle_step(&[Vec2::new(1.0, 0.0)], 3.0, 1.0), Vec2::ZERO);
        assert_eq!(circle_step(&[], 3.0, 1.0), Vec2::ZERO);
    }

    #[test]
    fn square_is_a_regular_polygon() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(circle_error(&sq, 0.5f64.sqrt()) < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_infinite() {
        let same = [Vec2::new(1.0, 1.0); 4];
        assert_eq!(circle_error(&same, 1.0), f64::INFINITY);
        assert_eq!(chain_error(&same, Vec2::ZERO, Vec2::new(5.0, 0.0)), f64::INFINITY);
        assert_eq!(
            chain_error(&[Vec2::new(1.0, 1.0)], Vec2::ZERO, Vec2::ZERO),
            f64::INFINITY
        );
    }

    #[test]
    fn uniform_chain_is_a_fixed_point() {
        let (a, b) = (Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let ps: Vec<Vec2> = (1..=4).map(|i| Vec2::new(2.0 * i as f64, 0.0)).collect();
        assert_eq!(chain_error(&ps, a, b), 0.0);
        for (i, me) in ps.iter().enumerate() {
            let others: Vec<Vec2> = ps
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| *p)
                .collect();
            let (prev, next) = chain_neighbors(*me, &others, a, b);
            assert_eq!(chain_step(*me, prev, next, 1.0), Vec2::ZERO);
        }
    }

    #[test]
    fn single_link_heads_for_the_midpoint() {
        let (a, b) = (Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let me = Vec2::new(2.0, 3.0);
        let (prev, next) = chain_neighbors(me, &[], a, b);
        let v = chain_step(me, prev, next, 100.0);
        assert_eq!(me + v / GAIN, Vec2::new(5.0, 0.0));
    }

    #[test]
    fn chain_order_follows_projection() {
        let (a, b) = (Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let others = [Vec2::new(7.0, 2.0), Vec2::new(1.0, -1.0), Vec2::new(4.0, 5.0)];
        let (prev, next) = chain_neighbors(Vec2::new(5.0, 0.0), &others, a, b);
        assert_eq!((prev, next), (others[2], others[0]));
    }
}
