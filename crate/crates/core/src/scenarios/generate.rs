//! Build scenario configs from loosely typed `key=value` knobs, as they
//! arrive from a command line or a request body.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use super::mushrooms::{Mode, Strategy};
use super::{chase, formation, maze, mushrooms};
use crate::geometry::Vec2;

pub const GENERATORS: &[&str] = &["chase", "maze", "mushrooms", "circle", "chain"];

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("unknown scenario `{0}` (expected chase, maze, mushrooms, circle or chain)")]
    UnknownScenario(String),
    #[error("unknown parameter `{key}` for {scenario}; known: {known}")]
    UnknownParam {
        scenario: String,
        key: String,
        known: String,
    },
    #[error("bad value for `{key}`: `{value}` ({reason})")]
    BadValue { key: String, value: String, reason: String },
}

struct Knobs<'a> {
    map: &'a BTreeMap<String, String>,
}

impl<'a> Knobs<'a> {
    fn check(&self, scenario: &str, known: &[&str]) -> Result<(), GenerateError> {
        match self.map.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(GenerateError::UnknownParam {
                scenario: scenario.into(),
                key: k.clone(),
                known: known.join(", "),
            }),
            None => Ok(()),
        }
    }

    fn bad(key: &str, value: &str, reason: impl Into<String>) -> GenerateError {
        GenerateError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), GenerateError> {
        if let Some(v) = self.map.get(key) {
            *slot = v.trim().parse().map_err(|_| Self::bad(key, v, "not a valid number"))?;
        }
        Ok(())
    }

    /// Like `get` but rejects negative, zero, NaN and infinite values.
    fn positive(&self, key: &str, slot: &mut f64) -> Result<(), GenerateError> {
        self.get(key, slot)?;
        if !(slot.is_finite() && *slot > 0.0) {
            return Err(Self::bad(key, &slot.to_string(), "must be positive"));
        }
        Ok(())
    }

    fn point(&self, key: &str) -> Result<Option<Vec2>, GenerateError> {
        let Some(v) = self.map.get(key) else { return Ok(None) };
        let (x, y) = v.split_once(',').ok_or_else(|| Self::bad(key, v, "expected `x,y`"))?;
        let p = (x.trim().parse::<f64>(), y.trim().parse::<f64>());
        match p {
            (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => Ok(Some(Vec2::new(x, y))),
            _ => Err(Self::bad(key, v, "expected `x,y`")),
        }
    }
}

/// Config text for `scenario` with knobs left at their defaults unless given.
pub fn generate(scenario: &str, seed: u64, params: &BTreeMap<String, String>) -> Result<String, GenerateError> {
    let k = Knobs { map: params };
    match scenario {
        "chase" => {
            k.check(
                scenario,
                &[
                    "arena",
                    "predator_speed",
                    "prey_speed",
                    "near_threshold",
                    "max_ticks",
                    "pose_every",
                    "predator_at",
                    "prey_at",
                ],
            )?;
            let mut p = chase::ChaseParams::default();
            k.positive("arena", &mut p.arena)?;
            k.get("predator_speed", &mut p.predator_speed)?;
            k.get("prey_speed", &mut p.prey_speed)?;
            k.positive("near_threshold", &mut p.near_threshold)?;
            k.get("max_ticks", &mut p.max_ticks)?;
            k.get("pose_every", &mut p.pose_every)?;
            p.starts = match (k.point("predator_at")?, k.point("prey_at")?) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => {
                    return Err(Knobs::bad(
                        "predator_at",
                        "",
                        "give both `predator_at` and `prey_at` or neither",
                    ))
                }
            };
            Ok(chase::chase_config(&p, seed))
        }
        "maze" => {
            k.check(
                scenario,
                &["cols", "rows", "cell", "wall", "speed", "max_ticks", "pose_every"],
            )?;
            let mut p = maze::MazeParams::default();
            k.get("cols", &mut p.cols)?;
            k.get("rows", &mut p.rows)?;
            if p.cols == 0 || p.rows == 0 {
                return Err(Knobs::bad(
                    "cols",
                    &format!("{}x{}", p.cols, p.rows),
                    "maze needs at least one cell",
                ));
            }
            k.positive("cell", &mut p.cell)?;
            k.positive("wall", &mut p.wall)?;
            k.positive("speed", &mut p.speed)?;
            k.get("max_ticks", &mut p.max_ticks)?;
            k.get("pose_every", &mut p.pose_every)?;
            Ok(maze::maze_config(&p, seed))
        }
        "mushrooms" => {
            k.check(
                scenario,
                &[
                    "arena",
                    "home",
                    "mushrooms",
                    "vision",
                    "d_min",
                    "speed",
                    "strategies",
                    "mode",
                    "max_ticks",
                    "pose_every",
                ],
            )?;
            let mut p = mushrooms::MushroomParams::default();
            k.positive("arena", &mut p.arena)?;
            k.positive("home", &mut p.home)?;
            k.get("mushrooms", &mut p.mushrooms)?;
            k.positive("vision", &mut p.vision)?;
            k.positive("d_min", &mut p.d_min)?;
            k.positive("speed", &mut p.speed)?;
            k.get("max_ticks", &mut p.max_ticks)?;
            k.get("pose_every", &mut p.pose_every)?;
            if let Some(v) = params.get("strategies") {
                let parsed: Option<Vec<Strategy>> = v.split(',').map(|s| Strategy::parse(s.trim())).collect();
                p.strategies = match parsed {
                    Some(s) if (1..=4).contains(&s.len()) => s,
                    _ => return Err(Knobs::bad("strategies", v, "one to four of `random` and `return`")),
                };
            }
            if let Some(v) = params.get("mode") {
                p.mode = match v.as_str() {
                    "A" => Mode::A,
                    "B" => Mode::B,
                    _ => return Err(Knobs::bad("mode", v, "expected `A` or `B`")),
                };
            }
            Ok(mushrooms::mushroom_config(&p, seed))
        }
        "circle" | "chain" => {
            k.check(
                scenario,
                &[
                    "n",
                    "radius",
                    "k",
                    "a",
                    "b",
                    "max_ticks",
                    "pose_every",
                    "until",
                    "spread",
                ],
            )?;
            let mut p = formation::FormationParams::default();
            k.get("n", &mut p.n)?;
            if p.n < 2 {
                return Err(Knobs::bad("n", &p.n.to_string(), "a formation needs two agents"));
            }
            k.positive("radius", &mut p.radius)?;
            if let Some(v) = params.get("k") {
                p.k = Some(v.trim().parse().map_err(|_| Knobs::bad("k", v, "not a count"))?);
            }
            p.a = k.point("a")?.unwrap_or(p.a);
            p.b = k.point("b")?.unwrap_or(p.b);
            k.get("max_ticks", &mut p.max_ticks)?;
            k.get("pose_every", &mut p.pose_every)?;
            if params.contains_key("until") {
                let mut u = 0.0;
                k.positive("until", &mut u)?;
                p.until = Some(u);
            }
            k.positive("spread", &mut p.spread)?;
            Ok(if scenario == "circle" {
                formation::circle_config(&p, seed)
            } else {
                formation::chain_config(&p, seed)
            })
        }
        other => Err(GenerateError::UnknownScenario(other.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{load_config, Assets};

    fn knobs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_load_for_every_scenario() {
        for name in GENERATORS {
            let xml = generate(name, 3, &BTreeMap::new()).unwrap();
            load_config(&xml, &Assets::new()).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        }
    }

    #[test]
    fn knobs_reach_the_config() {
        let xml = generate("maze", 1, &knobs(&[("cols", "4"), ("rows", "3"), ("max_ticks", "77")])).unwrap();
        assert_eq!(
            xml,
            maze::maze_config(
                &maze::MazeParams {
                    cols: 4,
                    rows: 3,
                    max_ticks: 77,
                    ..Default::default()
                },
                1
            )
        );
        let xml = generate(
            "mushrooms",
            2,
            &knobs(&[("strategies", "return,random"), ("mode", "B")]),
        )
        .unwrap();
        assert_eq!(xml.matches("<agent ").count(), 2);
        assert!(xml.contains(r#"mode="B""#));
    }

    #[test]
    fn typos_and_junk_are_reported() {
        assert!(matches!(
            generate("chase", 0, &knobs(&[("arnea", "5")])),
            Err(GenerateError::UnknownParam { .. })
        ));
        assert!(matches!(
            generate("chase", 0, &knobs(&[("arena", "-5")])),
            Err(GenerateError::BadValue { .. })
        ));
        assert!(generate("chase", 0, &knobs(&[("predator_at", "1,1")])).is_err());
        assert!(generate("circle", 0, &knobs(&[("n", "1")])).is_err());
        assert!(generate("mushrooms", 0, &knobs(&[("strategies", "a,b,c,d,e")])).is_err());
        assert_eq!(
            generate("soccer", 0, &BTreeMap::new()),
            Err(GenerateError::UnknownScenario("soccer".into()))
        );
    }
}
