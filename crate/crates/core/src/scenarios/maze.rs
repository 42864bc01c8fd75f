//! Maze solving by left-hand wall following.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{require_agent, scenario_only};
use crate::agent::AgentSpec;
use crate::devices::{DeviceKind, OdometryState};
use crate::env::{EnvironmentMap, Monitor, MonitorEvent, RunConfig, ScenarioSpec};
use crate::geometry::Rect;

/// A perfect maze on a `cols` x `rows` grid: every cell reachable by exactly
/// one path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maze {
    pub cols: usize,
    pub rows: usize,
    /// `east[y][x]`: wall between (x, y) and (x + 1, y).
    east: Vec<Vec<bool>>,
    /// `north[y][x]`: wall between (x, y) and (x, y + 1).
    north: Vec<Vec<bool>>,
}

impl Maze {
    /// Recursive backtracker, iterative, driven by `seed`.
    pub fn generate(cols: usize, rows: usize, seed: u64) -> Maze {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Maze {
            cols,
            rows,
            east: vec![vec![true; cols]; rows],
            north: vec![vec![true; cols]; rows],
        };
        let mut seen = vec![vec![false; cols]; rows];
        let mut stack = vec![(0usize, 0usize)];
        seen[0][0] = true;
        while let Some(&(x, y)) = stack.last() {
            let mut next: Vec<(usize, usize)> = Vec::with_capacity(4);
            if x + 1 < cols && !seen[y][x + 1] {
                next.push((x + 1, y));
            }
            if x > 0 && !seen[y][x - 1] {
                next.push((x - 1, y));
            }
            if y + 1 < rows && !seen[y + 1][x] {
                next.push((x, y + 1));
            }
            if y > 0 && !seen[y - 1][x] {
                next.push((x, y - 1));
            }
            match next.choose(&mut rng) {
                None => {
                    stack.pop();
                }
                Some(&(nx, ny)) => {
                    m.open((x, y), (nx, ny));
                    seen[ny][nx] = true;
                    stack.push((nx, ny));
                }
            }
        }
        m
    }

    fn open(&mut self, a: (usize, usize), b: (usize, usize)) {
        let (lo, hi) = if (a.1, a.0) < (b.1, b.0) { (a, b) } else { (b, a) };
        if lo.1 == hi.1 {
            self.east[lo.1][lo.0] = false;
        } else {
            self.north[lo.1][lo.0] = false;
        }
    }

    /// Cells reachable from `(x, y)` in one move.
    pub fn neighbors(&self, x: usize, y: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if x + 1 < self.cols && !self.east[y][x] {
            out.push((x + 1, y));
        }
        if x > 0 && !self.east[y][x - 1] {
            out.push((x - 1, y));
        }
        if y + 1 < self.rows && !self.north[y][x] {
            out.push((x, y + 1));
        }
        if y > 0 && !self.north[y - 1][x] {
            out.push((x, y - 1));
        }
        out
    }

    /// Interior walls as rectangles, collinear runs merged. The outer boundary
    /// is the world edge.
    pub fn wall_rects(&self, cell: f64, thickness: f64) -> Vec<Rect> {
        let half = thickness / 2.0;
        let mut out = Vec::new();
        // vertical walls on the east side of column x
        for x in 0..self.cols.saturating_sub(1) {
            let mut y = 0;
            while y < self.rows {
                if !self.east[y][x] {
                    y += 1;
                    continue;
                }
                let start = y;
                while y < self.rows && self.east[y][x] {
                    y += 1;
                }
                let x0 = (x + 1) as f64 * cell - half;
                let y0 = (start as f64 * cell - half).max(0.0);
                let y1 = (y as f64 * cell + half).min(self.rows as f64 * cell);
                out.push(Rect::new(x0, y0, thickness, y1 - y0));
            }
        }
        for y in 0..self.rows.saturating_sub(1) {
            let mut x = 0;
            while x < self.cols {
                if !self.north[y][x] {
                    x += 1;
                    continue;
                }
                let start = x;
                while x < self.cols && self.north[y][x] {
                    x += 1;
                }
                let y0 = (y + 1) as f64 * cell - half;
                let x0 = (start as f64 * cell - half).max(0.0);
                let x1 = (x as f64 * cell + half).min(self.cols as f64 * cell);
                out.push(Rect::new(x0, y0, x1 - x0, thickness));
            }
        }
        out
    }

    /// Number of cells reachable from the origin cell.
    pub fn reachable(&self) -> usize {
        let mut seen = vec![vec![false; self.cols]; self.rows];
        let mut stack = vec![(0, 0)];
        seen[0][0] = true;
        let mut n = 0;
        while let Some((x, y)) = stack.pop() {
            n += 1;
            for (nx, ny) in self.neighbors(x, y) {
                if !seen[ny][nx] {
                    seen[ny][nx] = true;
                    stack.push((nx, ny));
                }
            }
        }
        n
    }

    /// Count of open passages; a perfect maze has exactly cells - 1.
    pub fn passages(&self) -> usize {
        let mut n = 0;
        for y in 0..self.rows {
            for x in 0..self.cols {
                if x + 1 < self.cols && !self.east[y][x] {
                    n += 1;
                }
                if y + 1 < self.rows && !self.north[y][x] {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Knobs for a generated maze run.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeParams {
    pub cols: usize,
    pub rows: usize,
    pub cell: f64,
    pub wall: f64,
    pub speed: f64,
    pub max_ticks: u64,
    pub pose_every: u64,
}

impl Default for MazeParams {
    fn default() -> Self {
        Self {
            cols: 15,
            rows: 15,
            cell: 1.5,
            wall: 0.1,
            speed: 0.5,
            max_ticks: 50_000,
            pose_every: 1,
        }
    }
}

/// Exit region of a maze: the far corner cell, shrunk a little so entering it
/// means being well inside.
pub fn exit_region(p: &MazeParams) -> Rect {
    let inset = p.cell * 0.25;
    Rect::new(
        (p.cols - 1) as f64 * p.cell + inset,
        (p.rows - 1) as f64 * p.cell + inset,
        p.cell - 2.0 * inset,
        p.cell - 2.0 * inset,
    )
}

/// Devices of the wall follower: a front switch, a left and a front ranger,
/// and wheel encoders.
pub const WALKER_DEVICES: &str = r#"    <device name="touch_f" kind="touch" angle="0" half_width="0.8"/>
    <device name="ir_left" kind="proximity" angle="1.5708" range="1"/>
    <device name="ir_front" kind="proximity" angle="0" range="1"/>
    <device name="odo" kind="odometry" wheel_radius="0.05" ticks_per_rev="100"/>
"#;

/// Threshold rules feeding the wall follower.
pub const WALKER_RULES: &str = r#"    <threshold source="touch_f" op="gt" value="0.5" event="BUMP"/>
    <threshold source="ir_front" op="lt" value="0.3" event="FRONT"/>
    <threshold source="ir_left" op="le" value="1" event="LEFT" payload="true"/>
"#;

/// Run config for a generated maze with one wall follower starting in the
/// origin cell.
pub fn maze_config(p: &MazeParams, seed: u64) -> String {
    let maze = Maze::generate(p.cols, p.rows, seed);
    let (w, h) = (p.cols as f64 * p.cell, p.rows as f64 * p.cell);
    let exit = exit_region(p);
    let mut s = String::new();
    let _ = writeln!(s, "<jade>");
    let _ = writeln!(
        s,
        r#"  <run seed="{seed}" tick="0.1" max_ticks="{}" pose_every="{}"/>"#,
        p.max_ticks, p.pose_every
    );
    let _ = writeln!(s, r#"  <world w="{w}" h="{h}">"#);
    for r in maze.wall_rects(p.cell, p.wall) {
        let _ = writeln!(
            s,
            r#"    <rect x="{:.4}" y="{:.4}" w="{:.4}" h="{:.4}"/>"#,
            r.x, r.y, r.w, r.h
        );
    }
    let _ = writeln!(s, "  </world>");
    let _ = writeln!(
        s,
        r#"  <scenario name="maze" agent="walker" exit="{},{},{},{}"/>"#,
        exit.x, exit.y, exit.w, exit.h
    );
    let c = p.cell / 2.0;
    let _ = writeln!(
        s,
        r#"  <agent name="walker" color="purple" x="{c}" y="{c}" heading="0" csm="builtin:wall_follower">"#
    );
    let _ = writeln!(s, r#"    <drive max_speed="{}"/>"#, p.speed);
    s.push_str(WALKER_DEVICES);
    s.push_str(WALKER_RULES);
    let _ = writeln!(s, "  </agent>");
    let _ = writeln!(s, "</jade>");
    s
}

fn parse_rect(v: &str) -> Option<Rect> {
    let xs: Vec<f64> = v.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
    match xs.as_slice() {
        [x, y, w, h] if *w > 0.0 && *h > 0.0 => Some(Rect::new(*x, *y, *w, *h)),
        _ => None,
    }
}

pub(crate) fn check(spec: &ScenarioSpec, agents: &[AgentSpec]) -> Result<Vec<String>, String> {
    scenario_only(spec, &["agent", "exit"])?;
    require_agent(agents, spec.param("agent").unwrap_or("walker"), "walker")?;
    match spec.param("exit") {
        None => Err("maze scenario requires `exit=\"x,y,w,h\"`".into()),
        Some(v) => parse_rect(v)
            .map(|_| Vec::new())
            .ok_or_else(|| format!("maze exit is not a rectangle `x,y,w,h`: `{v}`")),
    }
}

/// Stops the run when the walker's centre enters the exit region.
pub struct MazeMonitor {
    agent: String,
    exit: Option<Rect>,
    reached: Option<u64>,
}

impl MazeMonitor {
    pub fn new(spec: &ScenarioSpec, _config: &RunConfig) -> Self {
        Self {
            agent: spec.param("agent").unwrap_or("walker").to_string(),
            exit: spec.param("exit").and_then(parse_rect),
            reached: None,
        }
    }
}

/// Distance travelled according to the agent's first wheel encoder.
pub fn odometry_distance(env: &EnvironmentMap, agent: &str) -> Option<f64> {
    let a = env.agent(agent)?;
    let (i, d) = a
        .spec
        .devices
        .iter()
        .filter(|d| matches!(d.kind, DeviceKind::Odometry { .. }))
        .enumerate()
        .next()?;
    let DeviceKind::Odometry {
        wheel_radius,
        ticks_per_rev,
    } = d.kind
    else {
        return None;
    };
    let o: &OdometryState = a.odometry.get(i)?;
    let per_tick = std::f64::consts::TAU * wheel_radius / f64::from(ticks_per_rev);
    Some((o.reported.0.abs() + o.reported.1.abs()) as f64 / 2.0 * per_tick)
}

impl Monitor for MazeMonitor {
    fn after_tick(&mut self, env: &EnvironmentMap) -> Vec<MonitorEvent> {
        let (Some(exit), None) = (self.exit, self.reached) else {
            return Vec::new();
        };
        let Some(a) = env.agent(&self.agent) else {
            return Vec::new();
        };
        if !exit.contains(a.pose.position) {
            return Vec::new();
        }
        self.reached = Some(env.tick_count() - 1);
        vec![
            MonitorEvent::Mark {
                label: "exit".into(),
                position: a.pose.position,
            },
            MonitorEvent::Stop("exit".into()),
        ]
    }

    fn metrics(&self, env: &EnvironmentMap) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("solved".into(), if self.reached.is_some() { 1.0 } else { 0.0 });
        if let Some(t) = self.reached {
            m.insert("exit_tick".into(), t as f64);
        }
        if let Some(d) = odometry_distance(env, &self.agent) {
            m.insert("path_length".into(), d);
        }
        m.insert("ticks".into(), env.tick_count() as f64);
        m
    }
}

/// Checks that the left ranger stays near the follower's set point while it
/// tracks one wall. A tick counts as tracking when the left ranger sees
/// something, the front ranger is clear and the reading did not jump (a jump
/// means the ranger switched to another wall). The band is only enforced once
/// `settle` tracking ticks have passed in a row.
#[derive(Debug, Clone)]
pub struct WhiskerBand {
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
    pub settle: u32,
    pub jump: f64,
    pub front_clear: f64,
    streak: u32,
    prev: Option<f64>,
    pub checked: u64,
    pub violations: u64,
    pub min_seen: f64,
    pub max_seen: f64,
}

impl Default for WhiskerBand {
    fn default() -> Self {
        Self::new(0.25, 0.45, 0.15)
    }
}

impl WhiskerBand {
    pub fn new(lo: f64, hi: f64, delta: f64) -> Self {
        Self {
            lo,
            hi,
            delta,
            settle: 40,
            jump: 0.05,
            front_clear: 0.6,
            streak: 0,
            prev: None,
            checked: 0,
            violations: 0,
            min_seen: f64::INFINITY,
            max_seen: f64::NEG_INFINITY,
        }
    }

    /// Feed one tick of ranger readings. Returns false on a violation.
    pub fn observe(&mut self, left: Option<f64>, front: Option<f64>) -> bool {
        let clear = front.is_none_or(|f| f >= self.front_clear);
        let steady = match (left, self.prev) {
            (Some(l), Some(p)) => (l - p).abs() <= self.jump,
            _ => false,
        };
        self.prev = left;
        if !(clear && steady) {
            self.streak = 0;
            return true;
        }
        self.streak += 1;
        if self.streak <= self.settle {
            return true;
        }
        let l = left.unwrap_or_default();
        self.checked += 1;
        self.min_seen = self.min_seen.min(l);
        self.max_seen = self.max_seen.max(l);
        let ok = l >= self.lo - self.delta && l <= self.hi + self.delta;
        if !ok {
            self.violations += 1;
        }
        ok
    }

    /// Feed the current readings of `agent` (devices `ir_left`, `ir_front`).
    pub fn observe_env(&mut self, env: &EnvironmentMap, agent: &str) -> bool {
        let Some(r) = env.current_readings(agent) else {
            return true;
        };
        self.observe(r.proximity("ir_left"), r.proximity("ir_front"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_mazes_are_perfect() {
        for seed in 0..20 {
            let m = Maze::generate(15, 15, seed);
            assert_eq!(m.reachable(), 225, "seed {seed}");
            assert_eq!(m.passages(), 224, "seed {seed}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(Maze::generate(8, 8, 3), Maze::generate(8, 8, 3));
        assert_ne!(Maze::generate(8, 8, 3), Maze::generate(8, 8, 4));
    }

    #[test]
    fn walls_stay_inside_the_world() {
        let m = Maze::generate(15, 15, 1);
        for r in m.wall_rects(1.5, 0.1) {
            assert!(r.x >= 0.0 && r.y >= 0.0 && r.x + r.w <= 22.5 + 1e-9 && r.y + r.h <= 22.5 + 1e-9);
        }
    }

    #[test]
    fn exit_rect_parses() {
        assert_eq!(parse_rect("1,2,3,4"), Some(Rect::new(1.0, 2.0, 3.0, 4.0)));
        assert_eq!(parse_rect("1,2,3"), None);
        assert_eq!(parse_rect("1,2,0,4"), None);
    }
}
