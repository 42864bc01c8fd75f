use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::directory::GroupCommand;
use super::log::{parse_f64, parse_payload, parse_record, LogHeader, Record, NO_AGENT};
use super::run::Runner;
use super::EnvError;
use crate::agent::{AgentError, AgentMind, AgentOutput, Attachment, Message, Outgoing, ResourceOp};
use crate::devices::Readings;
use crate::geometry::{ResourceId, WheelSpeeds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Pass {
        ticks: u64,
    },
    /// First tick whose regenerated records differ from the log.
    Fail {
        tick: u64,
        line: usize,
        expected: String,
        found: String,
    },
    /// The log ends early; everything up to `last_verified` matched.
    Partial {
        last_verified: Option<u64>,
    },
}

/// Plays back recorded outputs instead of thinking.
struct ReplayMind {
    outputs: BTreeMap<u64, AgentOutput>,
}

impl AgentMind for ReplayMind {
    fn step(&mut self, tick: u64, _: &Readings, _: &[Message]) -> Result<AgentOutput, AgentError> {
        Ok(self.outputs.remove(&tick).unwrap_or_default())
    }
}

fn absorb(out: &mut AgentOutput, r: &Record) -> Option<()> {
    match r.kind.as_str() {
        "cmd" => {
            let f = r.fields();
            if f.len() != 2 {
                return None;
            }
            out.drive = WheelSpeeds::new(parse_f64(f[0]).ok()?, parse_f64(f[1]).ok()?);
        }
        "send" => {
            let (to, payload) = r.payload.split_once(' ')?;
            out.messages.push(Outgoing {
                to: to.to_string(),
                payload: parse_payload(payload).ok()?,
            });
        }
        "op" => match r.fields().as_slice() {
            ["pick", id] => out.ops.push(ResourceOp::Pick(ResourceId(id.parse().ok()?))),
            ["drop"] => out.ops.push(ResourceOp::Drop),
            _ => return None,
        },
        "note" => out.notes.push(r.payload.clone()),
        _ => {}
    }
    Some(())
}

fn end_ticks(lines: &[&str]) -> Option<u64> {
    let last = parse_record(lines.last()?).ok()?;
    if last.kind != "end" {
        return None;
    }
    last.payload
        .split(' ')
        .find_map(|f| f.strip_prefix("ticks=")?.parse().ok())
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    generated: usize,
}

enum Compare {
    Ok,
    Diverged {
        line: usize,
        expected: String,
        found: String,
    },
    Exhausted,
}

impl Cursor<'_> {
    /// Compare lines generated since the last call with the recorded ones.
    fn compare(&mut self, text: &str) -> Compare {
        let new = &text[self.generated..];
        self.generated = text.len();
        for g in new.lines() {
            let Some(rec) = self.lines.get(self.pos) else {
                return Compare::Exhausted;
            };
            if *rec != g {
                return Compare::Diverged {
                    line: self.pos + 1,
                    expected: g.to_string(),
                    found: rec.to_string(),
                };
            }
            self.pos += 1;
        }
        Compare::Ok
    }
}

/// Re-simulate a log against its config, feeding recorded agent outputs.
pub fn replay(log: &str, config: &RunConfig) -> Result<Verdict, EnvError> {
    let lines: Vec<&str> = log.lines().collect();
    let header = LogHeader::parse(lines.first().copied().unwrap_or(""))?;
    if header.digest != config.digest {
        return Err(EnvError::DigestMismatch {
            log: format!("{:016x}", header.digest),
            config: format!("{:016x}", config.digest),
        });
    }

    let mut outputs: BTreeMap<&str, BTreeMap<u64, AgentOutput>> = BTreeMap::new();
    for line in &lines[1..] {
        let Ok(r) = parse_record(line) else { break };
        if r.agent == NO_AGENT {
            continue;
        }
        let out = outputs
            .entry(
                config
                    .agents
                    .iter()
                    .find(|a| a.name == r.agent)
                    .map_or("", |a| a.name.as_str()),
            )
            .or_default()
            .entry(r.tick)
            .or_default();
        // unparseable outputs are left out; the regenerated lines then disagree
        let _ = absorb(out, &r);
    }

    let max_ticks = end_ticks(&lines).unwrap_or(u64::MAX);
    let mut runner = Runner::new(config, header.seed, max_ticks, |spec, _| {
        let outputs = outputs.remove(spec.name.as_str()).unwrap_or_default();
        Ok((Attachment::InProcess, Box::new(ReplayMind { outputs })))
    })?;
    let mut cursor = Cursor {
        lines,
        pos: 0,
        generated: 0,
    };
    let mut last_verified = None;

    macro_rules! check {
        ($tick:expr) => {
            match cursor.compare(runner.env().log_text()) {
                Compare::Ok => {}
                Compare::Exhausted => return Ok(Verdict::Partial { last_verified }),
                Compare::Diverged {
                    line,
                    expected,
                    found,
                } => {
                    return Ok(Verdict::Fail {
                        tick: $tick,
                        line,
                        expected,
                        found,
                    })
                }
            }
        };
    }

    check!(0);
    loop {
        let t = runner.env().tick_count();
        // directory changes made between ticks
        while let Some(rec) = cursor.lines.get(cursor.pos).and_then(|l| parse_record(l).ok()) {
            if rec.kind != "group" {
                break;
            }
            let f = rec.fields();
            let (Some(cmd), Some(group)) = (f.first().and_then(|c| GroupCommand::parse(c)), f.get(1)) else {
                break;
            };
            let agent = (rec.agent != NO_AGENT).then_some(rec.agent.as_str());
            if runner.env_mut().manage_group(cmd, group, agent).is_err() {
                break;
            }
            check!(t);
        }
        if cursor.pos >= cursor.lines.len() {
            return Ok(Verdict::Partial { last_verified });
        }
        let more = runner.step()?;
        check!(t);
        if runner.env().tick_count() > t {
            last_verified = Some(t);
        }
        if !more {
            break;
        }
    }
    let t = runner.env().tick_count().saturating_sub(1);
    runner.finish();
    check!(t);
    if let Some(extra) = cursor.lines.get(cursor.pos) {
        return Ok(Verdict::Fail {
            tick: t,
            line: cursor.pos + 1,
            expected: String::new(),
            found: extra.to_string(),
        });
    }
    Ok(Verdict::Pass {
        ticks: runner.env().tick_count(),
    })
}
