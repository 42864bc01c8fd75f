//! The environment map: configuration, the tick loop, message routing,
//! logging, replay and trace rendering.

mod config;
mod directory;
mod log;
mod render;
mod replay;
mod run;
mod sim;
pub mod wire;

pub use config::{
    config_digest, load_config, referenced_assets, Assets, ConfigDiagnostic, GroupSpec, RunConfig, ScenarioSpec,
    BUILTIN_PREFIX,
};
pub use directory::{Directory, DirectoryError, GroupCommand, Route, BROADCAST};
pub use log::{
    escape, format_record, line_tick, nums, parse_f64, parse_log, parse_payload, parse_record, payload_text, to_fixed,
    unescape, Fnv64, LogError, LogHeader, LogWriter, ParsedLog, Record, LOG_VERSION, NO_AGENT,
};
pub use render::{render_trace, RenderMode, Trace, TraceAgent};
pub use replay::{replay, Verdict};
pub use run::{
    local_mind, run, run_with, AgentSummary, Monitor, MonitorEvent, NoMonitor, RunOptions, RunReport, Runner,
    STOP_MAX_TICKS,
};
pub use sim::{AgentState, EnvironmentMap, Mode, SimSettings, Theft, TickEvents};

use thiserror::Error;

use crate::agent::AgentError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("the environment map is offline")]
    Offline,
    #[error("cannot place `{name}`: {reason}")]
    Placement { name: String, reason: String },
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("log digest {log} does not match config digest {config}")]
    DigestMismatch { log: String, config: String },
    #[error("remote agent: {0}")]
    Remote(String),
    #[error("invalid configuration:\n{}", join_diags(.0))]
    Config(Vec<ConfigDiagnostic>),
}

fn join_diags(diags: &[ConfigDiagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}
