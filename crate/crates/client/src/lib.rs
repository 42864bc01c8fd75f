//! Thin async wrapper over the jade HTTP service.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use reqwest::Response;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use jade_api as api;
use jade_api::{
    Bundle, Catalog, ConfigDiagnostic, ErrorBody, GenerateRequest, GenerateResponse, Health, RenderMode, RenderRequest,
    RenderResponse, ReplayRequest, RunRequest, RunState, RunStatus, ValidateResponse, Verdict,
};

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:7878";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Http {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    /// The service answered with an error body.
    #[error("server said {status}: {error}")]
    Api {
        status: u16,
        error: String,
        diagnostics: Vec<ConfigDiagnostic>,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not well-formed")]
    Config(Vec<ConfigDiagnostic>),
}

impl ClientError {
    /// Config diagnostics carried by the error, if any.
    pub fn diagnostics(&self) -> &[ConfigDiagnostic] {
        match self {
            ClientError::Api { diagnostics, .. } | ClientError::Config(diagnostics) => diagnostics,
            _ => &[],
        }
    }

    /// HTTP status of an error answer from the service.
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Read a config file and the behavior files it references. Relative names
/// resolve against the config's directory.
pub fn bundle_from_file(path: &Path) -> Result<Bundle, ClientError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| ClientError::Read {
            path: p.to_path_buf(),
            source,
        })
    };
    let config = read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut assets = BTreeMap::new();
    for name in jade_core::env::referenced_assets(&config).map_err(ClientError::Config)? {
        let text = read(&dir.join(&name))?;
        assets.insert(name, text);
    }
    Ok(Bundle { config, assets })
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        Self {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(&self, req: reqwest::RequestBuilder, url: String) -> Result<Response, ClientError> {
        let resp = req.send().await.map_err(|source| ClientError::Http {
            url: url.clone(),
            source,
        })?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status();
        let text = resp.text().await.unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => ClientError::Api {
                status: status.as_u16(),
                error: body.error,
                diagnostics: body.diagnostics,
            },
            Err(_) => ClientError::Api {
                status: status.as_u16(),
                error: if text.is_empty() {
                    status.canonical_reason().unwrap_or("error").to_string()
                } else {
                    text
                },
                diagnostics: Vec::new(),
            },
        })
    }

    async fn json<T: DeserializeOwned>(&self, resp: Response, url: &str) -> Result<T, ClientError> {
        resp.json().await.map_err(|source| ClientError::Http {
            url: url.to_string(),
            source,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.send(self.http.get(&url), url.clone()).await?;
        self.json(resp, &url).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.send(self.http.post(&url).json(body), url.clone()).await?;
        self.json(resp, &url).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn catalog(&self) -> Result<Catalog, ClientError> {
        self.get("/v1/scenarios").await
    }

    pub async fn validate(&self, bundle: &Bundle) -> Result<ValidateResponse, ClientError> {
        self.post("/v1/validate", bundle).await
    }

    pub async fn start_run(&self, req: &RunRequest) -> Result<RunStatus, ClientError> {
        self.post("/v1/runs", req).await
    }

    pub async fn run_status(&self, id: u64) -> Result<RunStatus, ClientError> {
        self.get(&format!("/v1/runs/{id}")).await
    }

    pub async fn runs(&self) -> Result<Vec<RunStatus>, ClientError> {
        self.get("/v1/runs").await
    }

    /// Poll until the run is no longer running.
    pub async fn wait_run(&self, id: u64, every: Duration) -> Result<RunStatus, ClientError> {
        loop {
            let status = self.run_status(id).await?;
            if status.state != RunState::Running {
                return Ok(status);
            }
            tokio::time::sleep(every).await;
        }
    }

    pub async fn run_log(&self, id: u64) -> Result<String, ClientError> {
        let url = self.url(&format!("/v1/runs/{id}/log"));
        let resp = self.send(self.http.get(&url), url.clone()).await?;
        resp.text().await.map_err(|source| ClientError::Http { url, source })
    }

    pub async fn replay(&self, bundle: &Bundle, log: &str) -> Result<Verdict, ClientError> {
        let req = ReplayRequest {
            bundle: bundle.clone(),
            log: log.to_string(),
        };
        self.post("/v1/replay", &req).await
    }

    pub async fn render(&self, log: &str, mode: RenderMode) -> Result<Vec<String>, ClientError> {
        let req = RenderRequest {
            log: log.to_string(),
            mode,
        };
        let resp: RenderResponse = self.post("/v1/render", &req).await?;
        Ok(resp.documents)
    }

    pub async fn generate(
        &self,
        scenario: &str,
        seed: u64,
        params: BTreeMap<String, String>,
    ) -> Result<String, ClientError> {
        let req = GenerateRequest {
            scenario: scenario.to_string(),
            seed,
            params,
        };
        let resp: GenerateResponse = self.post("/v1/scenarios/generate", &req).await?;
        Ok(resp.config)
    }
}

/// True for errors that mean nothing is listening at the base URL.
pub fn is_unreachable(e: &ClientError) -> bool {
    matches!(e, ClientError::Http { source, .. } if source.is_connect())
}
