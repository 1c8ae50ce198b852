use std::time::Duration;

use serde_json::Value;
use ureq::Agent;

use super::protocol::{AdapterRequest, AdapterResponse, ResponseBody};
use super::{AdapterError, LanguageModel};

pub const ENDPOINT_VAR: &str = "SGR_LLM_ENDPOINT";
pub const TOKEN_VAR: &str = "SGR_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn from_env() -> Result<Self, AdapterError> {
        let endpoint = std::env::var(ENDPOINT_VAR)
            .map_err(|_| AdapterError::Configuration(format!("{ENDPOINT_VAR} is not set")))?;
        let mut config = Self::new(endpoint);
        config.token = std::env::var(TOKEN_VAR).ok().filter(|t| !t.is_empty());
        Ok(config)
    }
}

/// Posts each request as JSON to a single endpoint and validates the reply.
pub struct RemoteAdapter {
    config: RemoteConfig,
    agent: Agent,
}

enum Attempt {
    Retry(AdapterError),
    Fail(AdapterError),
}

impl RemoteAdapter {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, request: &AdapterRequest, payload: &str) -> Result<String, Attempt> {
        let mut call = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.config.token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = call.send(payload).map_err(|e| match e {
            ureq::Error::Timeout(_) => Attempt::Retry(AdapterError::Timeout { attempts: 1 }),
            other => Attempt::Retry(AdapterError::Transport(other.to_string())),
        })?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => Attempt::Retry(AdapterError::Timeout { attempts: 1 }),
            other => Attempt::Retry(AdapterError::Transport(other.to_string())),
        })?;
        match status {
            200..=299 => Ok(body),
            429 | 500..=599 => Err(Attempt::Retry(AdapterError::Transport(format!(
                "request {}: HTTP {status}",
                request.request_id
            )))),
            _ => Err(Attempt::Fail(AdapterError::Transport(format!("HTTP {status}: {body}")))),
        }
    }
}

/// Validates a raw reply `{request_id, body}` for `request`.
pub(crate) fn decode_reply(request: &AdapterRequest, raw: &str) -> Result<AdapterResponse, AdapterError> {
    let malformed = |reason: String| AdapterError::Malformed { reason, raw: raw.to_string() };
    let value: Value = serde_json::from_str(raw).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let request_id = value
        .get("request_id")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing numeric request_id".into()))?;
    if request_id != request.request_id {
        return Err(malformed(format!("request_id {} echoed as {request_id}", request.request_id)));
    }
    let body = value.get("body").ok_or_else(|| malformed("missing body".into()))?;
    let (body, clamped) = ResponseBody::from_json(request.kind, body, request.candidate_count()).map_err(malformed)?;
    Ok(AdapterResponse { request_id, body, clamped })
}

impl LanguageModel for RemoteAdapter {
    fn complete(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError> {
        let payload = request.to_wire().to_string();
        let mut delay = self.config.backoff;
        let mut last = AdapterError::Transport("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(request, &payload) {
                Ok(raw) => return decode_reply(request, &raw),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("request {} attempt {} failed: {e}", request.request_id, attempt + 1);
                    last = e;
                }
            }
        }
        Err(match last {
            AdapterError::Timeout { .. } => AdapterError::Timeout { attempts: self.config.retries + 1 },
            other => other,
        })
    }
}
