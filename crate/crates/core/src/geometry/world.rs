use std::fmt;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec2};

/// Dense registration index of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResourceId(pub u32);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What a ray or a disc ran into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectId {
    Wall,
    Obstacle(usize),
    Agent(AgentId),
}

/// Disc snapshot of an agent body used by the geometric queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: AgentId,
    pub position: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Point on the other object's surface nearest to the disc centre.
    pub point: Vec2,
    /// Unit normal pointing from the other object into the disc.
    pub normal: Vec2,
    pub other: ObjectId,
    pub depth: f64,
}

/// Axis-aligned rectangle anchored at its lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Vec2>,
    min: Vec2,
    max: Vec2,
}

impl Polygon {
    /// Builds a polygon from either winding; rejects non-convex or degenerate input.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::Polygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Polygon("non-finite vertex".into()));
        }
        let area2: f64 = (0..vertices.len())
            .map(|i| vertices[i].cross(vertices[(i + 1) % vertices.len()]))
            .sum();
        if area2.abs() <= 1e-12 {
            return Err(GeometryError::Polygon("zero area".into()));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).length() == 0.0 {
                return Err(GeometryError::Polygon(format!("repeated vertex {i}")));
            }
            if (b - a).cross(c - b) < -1e-12 {
                return Err(GeometryError::Polygon("not convex".into()));
            }
        }
        let mut min = vertices[0];
        let mut max = vertices[0];
        for v in &vertices {
            min = Vec2::new(min.x.min(v.x), min.y.min(v.y));
            max = Vec2::new(max.x.max(v.x), max.y.max(v.y));
        }
        Ok(Self { vertices, min, max })
    }

    pub fn rect(r: Rect) -> Result<Self, GeometryError> {
        Self::new(vec![
            Vec2::new(r.x, r.y),
            Vec2::new(r.x + r.w, r.y),
            Vec2::new(r.x + r.w, r.y + r.h),
            Vec2::new(r.x, r.y + r.h),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        (self.min, self.max)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= 0.0)
    }

    /// Nearest boundary point, the outward unit normal there, and the signed
    /// distance (negative inside).
    pub fn closest_boundary(&self, p: Vec2) -> (Vec2, Vec2, f64) {
        let mut inside = true;
        let mut best_line = f64::NEG_INFINITY;
        let mut best_line_idx = 0;
        let mut best_seg = f64::INFINITY;
        let mut best_seg_point = self.vertices[0];
        for (i, (a, b)) in self.edges().enumerate() {
            let e = b - a;
            let outward = Vec2::new(e.y, -e.x) / e.length();
            let d = outward.dot(p - a);
            if d > 0.0 {
                inside = false;
            }
            if d > best_line {
                best_line = d;
                best_line_idx = i;
            }
            let t = ((p - a).dot(e) / e.length_squared()).clamp(0.0, 1.0);
            let q = a + e * t;
            let dist = q.distance(p);
            if dist < best_seg {
                best_seg = dist;
                best_seg_point = q;
            }
        }
        if inside {
            let (a, b) = self.edges().nth(best_line_idx).expect("edge index");
            let e = b - a;
            let outward = Vec2::new(e.y, -e.x) / e.length();
            (p - outward * best_line, outward, best_line)
        } else {
            let normal = (p - best_seg_point).normalized().unwrap_or(Vec2::new(1.0, 0.0));
            (best_seg_point, normal, best_seg)
        }
    }
}

/// Piecewise-constant floor brightness covering the world exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorGrid {
    rows: usize,
    cols: usize,
    cell_w: f64,
    cell_h: f64,
    values: Vec<f64>,
}

impl FloorGrid {
    pub fn uniform(width: f64, height: f64, value: f64) -> Result<Self, GeometryError> {
        Self::new(width, height, 1, 1, vec![value])
    }

    /// `values` are row-major with row 0 at the bottom (smallest y).
    pub fn new(width: f64, height: f64, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::World("floor grid needs at least one cell".into()));
        }
        if values.len() != rows * cols {
            return Err(GeometryError::World(format!(
                "floor grid has {} values, expected {}",
                values.len(),
                rows * cols
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GeometryError::World(format!("floor value {v} outside [0, 1]")));
        }
        Ok(Self {
            rows,
            cols,
            cell_w: width / cols as f64,
            cell_h: height / rows as f64,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell containing `p`; boundary points go to the higher-index cell.
    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let col = ((p.x / self.cell_w).floor().max(0.0) as usize).min(self.cols - 1);
        let row = ((p.y / self.cell_h).floor().max(0.0) as usize).min(self.rows - 1);
        (row, col)
    }

    pub fn value_at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Home {
    pub owner: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceStatus {
    InField,
    Carried(AgentId),
    Stored(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: ResourceId,
    pub position: Vec2,
    pub status: ResourceStatus,
}

/// Static arena description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Polygon>,
    pub floor: FloorGrid,
    pub homes: Vec<Home>,
    pub resources: Vec<Resource>,
}

impl WorldMap {
    /// Empty arena with a uniformly bright floor.
    pub fn empty(width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(
            width,
            height,
            Vec::new(),
            FloorGrid::uniform(width, height, 1.0)?,
            Vec::new(),
            Vec::new(),
        )
    }

    pub fn new(
        width: f64,
        height: f64,
        obstacles: Vec<Polygon>,
        floor: FloorGrid,
        homes: Vec<Home>,
        resources: Vec<Resource>,
    ) -> Result<Self, GeometryError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::World(format!(
                "bounds must be positive, got {width} x {height}"
            )));
        }
        let world = Self {
            width,
            height,
            obstacles,
            floor,
            homes,
            resources,
        };
        for (i, poly) in world.obstacles.iter().enumerate() {
            if let Some(v) = poly.vertices().iter().find(|v| !world.in_bounds(**v)) {
                return Err(GeometryError::World(format!("obstacle {i} vertex {v} outside bounds")));
            }
        }
        let fw = world.floor.cell_w * world.floor.cols as f64;
        let fh = world.floor.cell_h * world.floor.rows as f64;
        if (fw - width).abs() > 1e-9 || (fh - height).abs() > 1e-9 {
            return Err(GeometryError::World("floor grid does not cover bounds".into()));
        }
        for (i, a) in world.homes.iter().enumerate() {
            for b in &world.homes[i + 1..] {
                if a.rect.overlaps(&b.rect) {
                    return Err(GeometryError::World(format!(
                        "homes of {} and {} overlap",
                        a.owner, b.owner
                    )));
                }
            }
        }
        Ok(world)
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    /// Floor value of the cell containing `p` (no interpolation).
    pub fn floor_brightness(&self, p: Vec2) -> Result<f64, GeometryError> {
        if !p.is_finite() || !self.in_bounds(p) {
            return Err(GeometryError::OutOfBounds { x: p.x, y: p.y });
        }
        let (row, col) = self.floor.cell_of(p);
        Ok(self.floor.value_at(row, col))
    }

    pub fn home_of(&self, owner: &str) -> Option<&Home> {
        self.homes.iter().find(|h| h.owner == owner)
    }

    pub fn home_containing(&self, p: Vec2) -> Option<&Home> {
        self.homes.iter().find(|h| h.rect.contains(p))
    }
}
