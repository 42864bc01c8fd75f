use serde::{Deserialize, Serialize};

use super::{
    integrate_unicycle, AgentId, Body, Contact, GeometryError, ObjectId, Pose, Vec2, WheelSpeeds, WorldMap,
    CONTACT_TOLERANCE, PENETRATION_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub distance: f64,
    pub other: ObjectId,
}

fn closer(best: &mut Option<RayHit>, distance: f64, other: ObjectId) {
    if best.is_none_or(|b| distance < b.distance) {
        *best = Some(RayHit { distance, other });
    }
}

/// Nearest hit along a ray against arena walls, obstacle edges and agent discs
/// (excluding `ignore`), limited to `max_range`.
pub fn ray_cast(
    world: &WorldMap,
    origin: Vec2,
    angle: f64,
    max_range: f64,
    ignore: Option<AgentId>,
    agents: &[Body],
) -> Option<RayHit> {
    let dir = Vec2::from_angle(angle);
    let mut best: Option<RayHit> = None;

    // arena walls, origin assumed inside
    let mut wall_t = f64::INFINITY;
    if dir.x > 0.0 {
        wall_t = wall_t.min((world.width - origin.x) / dir.x);
    } else if dir.x < 0.0 {
        wall_t = wall_t.min(-origin.x / dir.x);
    }
    if dir.y > 0.0 {
        wall_t = wall_t.min((world.height - origin.y) / dir.y);
    } else if dir.y < 0.0 {
        wall_t = wall_t.min(-origin.y / dir.y);
    }
    let wall_t = wall_t.max(0.0);
    if wall_t <= max_range {
        closer(&mut best, wall_t, ObjectId::Wall);
    }

    let end = origin + dir * max_range;
    let ray_min = Vec2::new(origin.x.min(end.x), origin.y.min(end.y));
    let ray_max = Vec2::new(origin.x.max(end.x), origin.y.max(end.y));

    for (i, poly) in world.obstacles.iter().enumerate() {
        let (pmin, pmax) = poly.bounds();
        if pmax.x < ray_min.x || pmin.x > ray_max.x || pmax.y < ray_min.y || pmin.y > ray_max.y {
            continue;
        }
        for (a, b) in poly.edges() {
            let e = b - a;
            let denom = dir.cross(e);
            if denom.abs() < 1e-15 {
                continue;
            }
            let ao = a - origin;
            let t = ao.cross(e) / denom;
            let s = ao.cross(dir) / denom;
            if t >= 0.0 && t <= max_range && (0.0..=1.0).contains(&s) {
                closer(&mut best, t, ObjectId::Obstacle(i));
            }
        }
    }

    for body in agents {
        if Some(body.id) == ignore {
            continue;
        }
        let f = origin - body.position;
        let b = f.dot(dir);
        let c = f.length_squared() - body.radius * body.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let far = -b + sq;
        if far < 0.0 {
            continue;
        }
        let near = -b - sq;
        let t = if near >= 0.0 { near } else { 0.0 };
        if t <= max_range {
            closer(&mut best, t, ObjectId::Agent(body.id));
        }
    }

    best
}

/// Deepest overlap of a disc with walls, obstacles or other agents.
pub fn disc_penetration(
    world: &WorldMap,
    center: Vec2,
    radius: f64,
    own: Option<AgentId>,
    agents: &[Body],
) -> Option<Contact> {
    let mut best: Option<Contact> = None;
    let mut consider = |c: Contact| {
        if c.depth > PENETRATION_EPS && best.is_none_or(|b| c.depth > b.depth) {
            best = Some(c);
        }
    };

    let walls = [
        (radius - center.x, Vec2::new(1.0, 0.0), Vec2::new(0.0, center.y)),
        (
            radius - (world.width - center.x),
            Vec2::new(-1.0, 0.0),
            Vec2::new(world.width, center.y),
        ),
        (radius - center.y, Vec2::new(0.0, 1.0), Vec2::new(center.x, 0.0)),
        (
            radius - (world.height - center.y),
            Vec2::new(0.0, -1.0),
            Vec2::new(center.x, world.height),
        ),
    ];
    for (depth, normal, point) in walls {
        consider(Contact {
            point,
            normal,
            other: ObjectId::Wall,
            depth,
        });
    }

    for (i, poly) in world.obstacles.iter().enumerate() {
        let (pmin, pmax) = poly.bounds();
        if center.x + radius < pmin.x
            || center.x - radius > pmax.x
            || center.y + radius < pmin.y
            || center.y - radius > pmax.y
        {
            continue;
        }
        let (point, normal, signed) = poly.closest_boundary(center);
        consider(Contact {
            point,
            normal,
            other: ObjectId::Obstacle(i),
            depth: radius - signed,
        });
    }

    for body in agents {
        if Some(body.id) == own {
            continue;
        }
        let delta = center - body.position;
        let dist = delta.length();
        let normal = if dist > 0.0 { delta / dist } else { Vec2::new(1.0, 0.0) };
        consider(Contact {
            point: body.position + normal * body.radius,
            normal,
            other: ObjectId::Agent(body.id),
            depth: radius + body.radius - dist,
        });
    }

    best
}

/// Disc-bodied differential-drive agent about to move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingDisc {
    pub id: AgentId,
    pub radius: f64,
    pub pose: Pose,
    pub wheels: WheelSpeeds,
    pub wheel_base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub pose: Pose,
    pub contact: Option<Contact>,
    /// Fraction of the step actually travelled.
    pub fraction: f64,
}

/// Advance a disc for `dt`, stopping at the first contact.
///
/// The swept arc is sampled in sub-steps no longer than a quarter radius;
/// the first colliding sample is refined by bisection until the remaining
/// travel uncertainty is within [`CONTACT_TOLERANCE`]. Motion past the
/// contact is cancelled.
pub fn move_with_collision(
    world: &WorldMap,
    disc: &MovingDisc,
    dt: f64,
    agents: &[Body],
) -> Result<Motion, GeometryError> {
    let end = integrate_unicycle(disc.pose, disc.wheels, disc.wheel_base, dt)?;
    let path_len = disc.wheels.linear().abs() * dt;
    if path_len == 0.0 {
        // pure rotation cannot change the footprint of a disc
        return Ok(Motion {
            pose: end,
            contact: None,
            fraction: 1.0,
        });
    }

    let at = |s: f64| -> Result<(Pose, Option<Contact>), GeometryError> {
        let pose = if s == 1.0 {
            end
        } else {
            integrate_unicycle(disc.pose, disc.wheels, disc.wheel_base, s * dt)?
        };
        let contact = disc_penetration(world, pose.position, disc.radius, Some(disc.id), agents);
        Ok((pose, contact))
    };

    let steps = (path_len / (0.25 * disc.radius)).ceil().max(1.0) as usize;
    let mut lo = 0.0;
    let mut lo_pose = disc.pose;
    for i in 1..=steps {
        let s = if i == steps { 1.0 } else { i as f64 / steps as f64 };
        let (pose, contact) = at(s)?;
        let Some(mut contact) = contact else {
            lo = s;
            lo_pose = pose;
            continue;
        };
        let mut hi = s;
        while (hi - lo) * path_len > CONTACT_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match at(mid)? {
                (pose, None) => {
                    lo = mid;
                    lo_pose = pose;
                }
                (_, Some(c)) => {
                    hi = mid;
                    contact = c;
                }
            }
        }
        return Ok(Motion {
            pose: lo_pose,
            contact: Some(contact),
            fraction: lo,
        });
    }
    Ok(Motion {
        pose: end,
        contact: None,
        fraction: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FloorGrid, Polygon, Rect};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn world_with(w: f64, h: f64, obstacles: Vec<Polygon>) -> WorldMap {
        WorldMap::new(w, h, obstacles, FloorGrid::uniform(w, h, 1.0).unwrap(), vec![], vec![]).unwrap()
    }

    fn body(id: u32, x: f64, y: f64, r: f64) -> Body {
        Body {
            id: AgentId(id),
            position: Vec2::new(x, y),
            radius: r,
        }
    }

    /// Brute-force segment intersection: march along the ray and test the
    /// sign change of the edge's implicit line.
    fn marched_hit(origin: Vec2, angle: f64, a: Vec2, b: Vec2, max: f64) -> Option<f64> {
        let dir = Vec2::from_angle(angle);
        let side = |p: Vec2| (b - a).cross(p - a);
        let n = 200_000;
        let mut prev = side(origin);
        for i in 1..=n {
            let t = max * i as f64 / n as f64;
            let p = origin + dir * t;
            let s = side(p);
            if prev.signum() != s.signum() {
                let along = (p - a).dot(b - a) / (b - a).length_squared();
                if (-1e-6..=1.0 + 1e-6).contains(&along) {
                    return Some(t);
                }
            }
            prev = s;
        }
        None
    }

    #[test]
    fn empty_world_short_ray_misses() {
        let w = world_with(10.0, 10.0, vec![]);
        assert_eq!(ray_cast(&w, Vec2::new(1.0, 1.0), 0.0, 0.5, None, &[]), None);
    }

    #[test]
    fn ray_hits_arena_wall() {
        let w = world_with(2.0, 10.0, vec![]);
        let hit = ray_cast(&w, Vec2::new(1.0, 1.0), 0.0, 5.0, None, &[]).unwrap();
        assert_eq!(hit.other, ObjectId::Wall);
        assert!((hit.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_square_obstacle() {
        let sq = Polygon::new(vec![
            Vec2::new(3.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 2.0),
            Vec2::new(3.0, 2.0),
        ])
        .unwrap();
        let w = world_with(10.0, 10.0, vec![sq]);
        let hit = ray_cast(&w, Vec2::new(1.0, 1.0), 0.0, 10.0, None, &[]).unwrap();
        let oracle = marched_hit(Vec2::new(1.0, 1.0), 0.0, Vec2::new(3.0, 0.0), Vec2::new(3.0, 2.0), 10.0).unwrap();
        assert!((oracle - 2.0).abs() < 1e-4);
        assert_eq!(hit.other, ObjectId::Obstacle(0));
        assert!((hit.distance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_agent_and_skips_ignored() {
        let w = world_with(10.0, 10.0, vec![]);
        let agents = [body(0, 1.0, 1.0, 0.3), body(1, 4.0, 1.0, 0.5)];
        let hit = ray_cast(&w, Vec2::new(1.3, 1.0), 0.0, 8.0, Some(AgentId(0)), &agents).unwrap();
        assert_eq!(hit.other, ObjectId::Agent(AgentId(1)));
        assert!((hit.distance - 2.2).abs() < 1e-12);
    }

    #[test]
    fn separated_discs_do_not_touch() {
        let w = world_with(10.0, 10.0, vec![]);
        let agents = [body(1, 5.7, 5.0, 0.3)];
        assert!(disc_penetration(&w, Vec2::new(5.0, 5.0), 0.3, Some(AgentId(0)), &agents).is_none());
    }

    #[test]
    fn overlapping_discs_contact_along_centre_line() {
        let w = world_with(10.0, 10.0, vec![]);
        let agents = [body(1, 5.5, 5.0, 0.3)];
        let c = disc_penetration(&w, Vec2::new(5.0, 5.0), 0.3, Some(AgentId(0)), &agents).unwrap();
        assert_eq!(c.other, ObjectId::Agent(AgentId(1)));
        assert!((c.normal.x + 1.0).abs() < 1e-12 && c.normal.y.abs() < 1e-12);
        assert!((c.depth - 0.1).abs() < 1e-12);
    }

    #[test]
    fn disc_near_polygon_edge() {
        let sq = Polygon::rect(Rect::new(3.0, 3.0, 2.0, 2.0)).unwrap();
        let w = world_with(10.0, 10.0, vec![sq]);
        // centre 0.2 above the top edge y = 5
        let c = disc_penetration(&w, Vec2::new(4.0, 5.2), 0.3, None, &[]).unwrap();
        assert_eq!(c.other, ObjectId::Obstacle(0));
        assert!(c.normal.x.abs() < 1e-12 && (c.normal.y - 1.0).abs() < 1e-12);
        assert!((c.point.y - 5.0).abs() < 1e-12);
        assert!((c.depth - 0.1).abs() < 1e-12);
    }

    #[test]
    fn free_motion_matches_integration() {
        let w = world_with(10.0, 10.0, vec![]);
        let disc = MovingDisc {
            id: AgentId(0),
            radius: 0.2,
            pose: Pose::new(5.0, 5.0, 0.3),
            wheels: WheelSpeeds::new(0.8, 1.0),
            wheel_base: 0.3,
        };
        let m = move_with_collision(&w, &disc, 0.5, &[]).unwrap();
        let want = integrate_unicycle(disc.pose, disc.wheels, 0.3, 0.5).unwrap();
        assert_eq!(m.pose, want);
        assert!(m.contact.is_none());
    }

    #[test]
    fn stops_just_before_wall() {
        let w = world_with(10.0, 10.0, vec![]);
        // surface 0.1 from the east wall, asked to travel 1.0
        let disc = MovingDisc {
            id: AgentId(0),
            radius: 0.3,
            pose: Pose::new(9.6, 5.0, 0.0),
            wheels: WheelSpeeds::new(1.0, 1.0),
            wheel_base: 0.3,
        };
        let m = move_with_collision(&w, &disc, 1.0, &[]).unwrap();
        let gap = 10.0 - (m.pose.position.x + 0.3);
        assert!((0.0..=1e-6).contains(&gap), "gap {gap}");
        let c = m.contact.unwrap();
        assert_eq!(c.other, ObjectId::Wall);
        assert!(disc_penetration(&w, m.pose.position, 0.3, None, &[]).is_none());
    }

    #[test]
    fn parallel_motion_keeps_full_step() {
        let w = world_with(10.0, 10.0, vec![]);
        let disc = MovingDisc {
            id: AgentId(0),
            radius: 0.3,
            pose: Pose::new(2.0, 0.35, 0.0),
            wheels: WheelSpeeds::new(1.0, 1.0),
            wheel_base: 0.3,
        };
        let m = move_with_collision(&w, &disc, 1.0, &[]).unwrap();
        assert!(m.contact.is_none());
        assert!((m.pose.position.x - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ray_hit_within_range(ox in 0.5f64..9.5, oy in 0.5f64..9.5, ang in -PI..PI, range in 0.1f64..20.0) {
            let sq = Polygon::rect(Rect::new(4.0, 4.0, 1.5, 1.0)).unwrap();
            let w = world_with(10.0, 10.0, vec![sq]);
            if let Some(hit) = ray_cast(&w, Vec2::new(ox, oy), ang, range, None, &[]) {
                prop_assert!(hit.distance <= range);
                let p = Vec2::new(ox, oy) + Vec2::from_angle(ang) * hit.distance;
                match hit.other {
                    ObjectId::Obstacle(i) => {
                        let (_, _, d) = w.obstacles[i].closest_boundary(p);
                        prop_assert!(d.abs() < 1e-9);
                    }
                    ObjectId::Wall => {
                        let d = p.x.min(p.y).min(10.0 - p.x).min(10.0 - p.y);
                        prop_assert!(d.abs() < 1e-9);
                    }
                    ObjectId::Agent(_) => unreachable!(),
                }
            }
        }

        #[test]
        fn motion_never_penetrates(
            x in 0.5f64..9.5, y in 0.5f64..9.5, h in -PI..PI,
            l in -3.0f64..3.0, r in -3.0f64..3.0, dt in 0.01f64..1.0,
        ) {
            let sq = Polygon::rect(Rect::new(4.0, 4.0, 2.0, 0.2)).unwrap();
            let w = world_with(10.0, 10.0, vec![sq]);
            prop_assume!(disc_penetration(&w, Vec2::new(x, y), 0.3, None, &[]).is_none());
            let disc = MovingDisc {
                id: AgentId(0), radius: 0.3, pose: Pose::new(x, y, h),
                wheels: WheelSpeeds::new(l, r), wheel_base: 0.3,
            };
            let m = move_with_collision(&w, &disc, dt, &[]).unwrap();
            let after = disc_penetration(&w, m.pose.position, 0.3, None, &[]);
            prop_assert!(after.is_none_or(|c| c.depth <= 1e-6));
        }
    }
}
