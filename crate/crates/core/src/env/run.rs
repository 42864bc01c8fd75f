use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::directory::GroupCommand;
use super::log::{nums, NO_AGENT};
use super::sim::{EnvironmentMap, SimSettings};
use super::EnvError;
use crate::agent::{agent_seed, AgentMind, AgentSpec, Attachment, LayeredAgent};
use crate::geometry::{AgentId, Vec2};
use crate::scenarios;

/// Something a scenario monitor noticed after a tick.
#[derive(Debug, Clone, PartialEq)]
pub enum MonitorEvent {
    /// Logged as an `event` record.
    Note(String),
    /// A point of interest for trace rendering, logged as a `mark` record.
    Mark { label: String, position: Vec2 },
    /// Terminate the run with this reason.
    Stop(String),
}

/// Post-tick observer that decides termination and computes metrics.
pub trait Monitor: Send {
    fn after_tick(&mut self, env: &EnvironmentMap) -> Vec<MonitorEvent>;
    fn metrics(&self, env: &EnvironmentMap) -> BTreeMap<String, f64>;
}

#[derive(Debug, Default)]
pub struct NoMonitor;

impl Monitor for NoMonitor {
    fn after_tick(&mut self, _: &EnvironmentMap) -> Vec<MonitorEvent> {
        Vec::new()
    }

    fn metrics(&self, _: &EnvironmentMap) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

pub const STOP_MAX_TICKS: &str = "max_ticks";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub max_ticks: Option<u64>,
    /// Agents whose minds attach over the wire protocol.
    pub remote: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub path_length: f64,
    pub carrying: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub digest: String,
    pub ticks: u64,
    pub stop_reason: String,
    /// True when the scenario ended the run rather than the tick cap.
    pub terminated: bool,
    pub metrics: BTreeMap<String, f64>,
    pub checksum: String,
    pub agents: Vec<AgentSummary>,
}

/// An in-process mind for `spec` with its derived random stream.
pub fn local_mind(spec: &AgentSpec, run_seed: u64, id: AgentId) -> Result<Box<dyn AgentMind>, EnvError> {
    let policy = scenarios::make_policy(&spec.policy)?;
    Ok(Box::new(LayeredAgent::new(spec, policy, agent_seed(run_seed, id.0))))
}

/// Drives an environment map tick by tick under a scenario monitor.
pub struct Runner {
    env: EnvironmentMap,
    monitor: Box<dyn Monitor>,
    max_ticks: u64,
    stop: Option<String>,
}

impl Runner {
    /// Registers every configured agent in declaration order. `mind_for`
    /// receives each spec with the id it will get.
    pub fn new(
        config: &RunConfig,
        seed: u64,
        max_ticks: u64,
        mut mind_for: impl FnMut(&AgentSpec, AgentId) -> Result<(Attachment, Box<dyn AgentMind>), EnvError>,
    ) -> Result<Runner, EnvError> {
        let settings = SimSettings {
            seed,
            dt: config.dt,
            near_threshold: config.near_threshold,
            checkpoint_every: config.checkpoint_every,
            pose_every: config.pose_every,
            digest: config.digest,
        };
        let mut env = EnvironmentMap::new(settings, config.world.clone());
        for (i, spec) in config.agents.iter().enumerate() {
            let (attachment, mind) = mind_for(spec, AgentId(i as u32))?;
            env.register(spec.clone(), attachment, mind)?;
        }
        for g in &config.groups {
            env.manage_group(GroupCommand::Create, &g.name, None)?;
            for m in &g.members {
                env.manage_group(GroupCommand::Join, &g.name, Some(m))?;
            }
        }
        Ok(Runner {
            env,
            monitor: scenarios::monitor_for(config),
            max_ticks,
            stop: None,
        })
    }

    pub fn env(&self) -> &EnvironmentMap {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut EnvironmentMap {
        &mut self.env
    }

    pub fn stopped(&self) -> Option<&str> {
        self.stop.as_deref()
    }

    pub fn max_ticks(&self) -> u64 {
        self.max_ticks
    }

    /// Run one tick and the monitor. Returns false once the run is over.
    pub fn step(&mut self) -> Result<bool, EnvError> {
        if self.stop.is_some() {
            return Ok(false);
        }
        if self.env.tick_count() >= self.max_ticks {
            self.stop = Some(STOP_MAX_TICKS.into());
            return Ok(false);
        }
        self.env.tick()?;
        for event in self.monitor.after_tick(&self.env) {
            match event {
                MonitorEvent::Note(text) => self.env.log_record("event", NO_AGENT, &text),
                MonitorEvent::Mark { label, position } => {
                    let payload = format!("{} {label}", nums(&[position.x, position.y]));
                    self.env.log_record("mark", NO_AGENT, &payload);
                }
                MonitorEvent::Stop(reason) => {
                    self.env.log_record("event", NO_AGENT, &format!("stop {reason}"));
                    self.stop = Some(reason);
                }
            }
        }
        if self.stop.is_none() && self.env.tick_count() >= self.max_ticks {
            self.stop = Some(STOP_MAX_TICKS.into());
        }
        Ok(self.stop.is_none())
    }

    /// Write metric and end records and build the report.
    pub fn finish(&mut self) -> RunReport {
        let reason = self.stop.clone().unwrap_or_else(|| STOP_MAX_TICKS.into());
        let metrics = self.monitor.metrics(&self.env);
        for (name, value) in &metrics {
            self.env
                .log_record("metric", NO_AGENT, &format!("{name} {}", nums(&[*value])));
        }
        let ticks = self.env.tick_count();
        self.env
            .log_record("end", NO_AGENT, &format!("ticks={ticks} reason={reason}"));
        self.env.finish(&reason);
        let settings = self.env.settings();
        RunReport {
            seed: settings.seed,
            digest: format!("{:016x}", settings.digest),
            ticks,
            terminated: reason != STOP_MAX_TICKS,
            stop_reason: reason,
            metrics,
            checksum: format!("{:016x}", self.env.checksum()),
            agents: self
                .env
                .agents()
                .iter()
                .map(|a| AgentSummary {
                    name: a.spec.name.clone(),
                    x: a.pose.position.x,
                    y: a.pose.position.y,
                    heading: a.pose.heading,
                    path_length: a.path_length,
                    carrying: a.carrying.map(|r| r.0),
                })
                .collect(),
        }
    }

    pub fn into_env(self) -> EnvironmentMap {
        self.env
    }
}

/// Run to completion. Returns the report and the log text.
pub fn run_with(
    config: &RunConfig,
    options: &RunOptions,
    mind_for: impl FnMut(&AgentSpec, AgentId) -> Result<(Attachment, Box<dyn AgentMind>), EnvError>,
) -> Result<(RunReport, String), EnvError> {
    let seed = options.seed.unwrap_or(config.seed);
    let max_ticks = options.max_ticks.unwrap_or(config.max_ticks);
    let mut runner = Runner::new(config, seed, max_ticks, mind_for)?;
    while runner.step()? {}
    let report = runner.finish();
    Ok((report, runner.into_env().into_log()))
}

/// Run with every agent in-process.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<(RunReport, String), EnvError> {
    let seed = options.seed.unwrap_or(config.seed);
    if let Some(name) = options.remote.iter().next() {
        return Err(EnvError::Remote(format!("agent `{name}` needs a wire connection")));
    }
    run_with(config, options, |spec, id| {
        Ok((Attachment::InProcess, local_mind(spec, seed, id)?))
    })
}
