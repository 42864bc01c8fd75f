//! JSON bodies shared by `jade-server` and `jade-client`.
//!
//! Reports, verdicts and diagnostics are the engine's own types; this crate
//! only adds the envelopes around them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use jade_core::env::{AgentSummary, ConfigDiagnostic, RenderMode, RunReport, Verdict};

/// A run config plus the text of every behavior file it references, keyed
/// by the name used in the config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub config: String,
    #[serde(default)]
    pub assets: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub valid: bool,
    /// Hex digest of config and behaviors; only for valid configs.
    pub digest: Option<String>,
    #[serde(default)]
    pub agents: Vec<String>,
    pub scenario: Option<String>,
    #[serde(default)]
    pub diagnostics: Vec<ConfigDiagnostic>,
    #[serde(default)]
    pub warnings: Vec<ConfigDiagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(flatten)]
    pub bundle: Bundle,
    pub seed: Option<u64>,
    pub max_ticks: Option<u64>,
    /// Agents whose minds attach over the TCP wire protocol.
    #[serde(default)]
    pub remote: Vec<String>,
    /// Answer only once the run is over. Ignored for runs with remote agents.
    #[serde(default)]
    pub wait: bool,
    /// How long remote agents get to register, in seconds.
    pub attach_timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub id: u64,
    pub state: RunState,
    #[serde(default)]
    pub remote: Vec<String>,
    /// Where remote agents connect.
    pub wire_addr: Option<String>,
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRequest {
    #[serde(flatten)]
    pub bundle: Bundle,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub log: String,
    pub mode: RenderMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub documents: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub config: String,
}

/// What the service can build and run without uploaded behaviors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub scenarios: Vec<String>,
    pub behaviors: Vec<String>,
    pub policies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<ConfigDiagnostic>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_request_is_flat_and_mostly_optional() {
        let r: RunRequest = serde_json::from_str(r#"{"config":"<jade/>"}"#).unwrap();
        assert_eq!(r.bundle.config, "<jade/>");
        assert!(r.remote.is_empty() && !r.wait && r.seed.is_none());
        let back = serde_json::to_value(&r).unwrap();
        assert_eq!(back["config"], "<jade/>");
        assert!(back.get("bundle").is_none());
    }

    #[test]
    fn modes_and_verdicts_have_plain_json() {
        assert_eq!(serde_json::to_string(&RenderMode::Overview).unwrap(), r#""overview""#);
        assert_eq!(
            serde_json::to_string(&RenderMode::Every(10)).unwrap(),
            r#"{"every":10}"#
        );
        assert_eq!(
            serde_json::to_string(&Verdict::Pass { ticks: 3 }).unwrap(),
            r#"{"verdict":"pass","ticks":3}"#
        );
        assert_eq!(serde_json::to_string(&RunState::Finished).unwrap(), r#""finished""#);
    }
}
