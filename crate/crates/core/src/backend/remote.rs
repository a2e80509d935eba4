//! Generic HTTP backend.
//!
//! Wire format (JSON, UTF-8):
//!
//! - `POST {url}/generate` with body
//!   `{"role": "planner"|"guardian"|"reflector"|"goal-writer", "prompt": str, "max_length": int, "temperature": float}`
//!   answered by `{"text": str, "value": float?}`.
//! - `GET {url}/health` answered by any 2xx status.
//!
//! When a token is configured it is sent as `Authorization: Bearer <token>`.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{BackendError, CognitionBackend, GenerationRequest, GenerationResponse, Health, Role};

pub const ENV_URL: &str = "METACOG_BACKEND_URL";
pub const ENV_TOKEN: &str = "METACOG_BACKEND_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Overrides request temperatures, e.g. 0 for acceptance smoke runs.
    pub force_temperature: Option<f64>,
}

impl RemoteConfig {
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(ENV_URL).map_err(|_| BackendError::Unavailable(format!("{ENV_URL} is not set")))?;
        Ok(Self {
            url,
            token: std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty()),
            timeout: Duration::from_secs(30),
            force_temperature: None,
        })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    role: Role,
    prompt: &'a str,
    max_length: u32,
    temperature: f64,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{path}", self.config.url.trim_end_matches('/'))
    }

    fn call(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let body = WireRequest {
            role: request.role,
            prompt: &request.prompt,
            max_length: request.max_length,
            temperature: self.config.force_temperature.unwrap_or(request.temperature),
        };
        let mut call = self.agent.post(self.endpoint("generate"));
        if let Some(token) = &self.config.token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let parsed: GenerationResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        if let Some(v) = parsed.value {
            if !(0.0..=1.0).contains(&v) {
                return Err(BackendError::Protocol(format!("value {v} outside [0, 1]")));
            }
        }
        Ok(parsed)
    }
}

impl CognitionBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    /// One call plus a single retry on failure.
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        match self.call(request) {
            Ok(r) => Ok(r),
            Err(first) => {
                log::warn!("remote backend call failed ({first}); retrying once");
                self.call(request).map_err(|second| match second {
                    BackendError::Unavailable(e) => BackendError::Unavailable(format!("retry exhausted: {e}")),
                    other => other,
                })
            }
        }
    }

    fn healthcheck(&self) -> Health {
        let start = Instant::now();
        let mut call = self.agent.get(self.endpoint("health"));
        if let Some(token) = &self.config.token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        match call.call() {
            Ok(_) => Health::ok(Some(start.elapsed())),
            Err(e) => Health::down(e.to_string()),
        }
    }
}
