//! The single boundary to a language model: typed requests and replies, a
//! deterministic scripted mock and a remote JSON client.

mod mock;
mod protocol;
mod remote;

use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub use mock::{MockAdapter, MockDefaults, MockScript, ScriptEntry};
pub use protocol::{AdapterRequest, AdapterResponse, RequestKind, RequestPayload, ResponseBody};
pub use remote::{RemoteAdapter, RemoteConfig, ENDPOINT_VAR, TOKEN_VAR};

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdapterError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed reply: {reason}")]
    Malformed { reason: String, raw: String },
    #[error("no scripted {kind} reply for instance {instance}, occurrence {occurrence} of {question:?}")]
    ScriptExhausted { kind: RequestKind, question: String, instance: u32, occurrence: u32 },
    #[error("adapter configuration: {0}")]
    Configuration(String),
}

/// A language model backend. Implementations must accept concurrent calls.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError>;
}

pub fn template(kind: RequestKind) -> &'static str {
    match kind {
        RequestKind::SchemaExtraction => include_str!("../../templates/v1/schema_extraction.txt"),
        RequestKind::Step => include_str!("../../templates/v1/step.txt"),
        RequestKind::Hypothesis => include_str!("../../templates/v1/hypothesis.txt"),
        RequestKind::AnswerRank => include_str!("../../templates/v1/answer_rank.txt"),
    }
}

fn bullet_lines(lines: &[String]) -> String {
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

/// Fills the kind's template with the question and payload.
pub fn render_prompt(question: &str, payload: &RequestPayload) -> String {
    let base = template(payload.kind()).replace("{question}", question);
    match payload {
        RequestPayload::SchemaExtraction { exemplar_triples } => base.replace("{triples}", &bullet_lines(exemplar_triples)),
        RequestPayload::Step { prior_states, triple } => base
            .replace("{prior}", &bullet_lines(prior_states))
            .replace("{triple}", triple),
        RequestPayload::Hypothesis { prior_hypotheses, prior_evidence } => {
            let evidence: Vec<String> = prior_evidence.iter().flatten().cloned().collect();
            base.replace("{prior}", &bullet_lines(prior_hypotheses))
                .replace("{evidence}", &bullet_lines(&evidence))
        }
        RequestPayload::AnswerRank { candidates, schema } => {
            let numbered: Vec<String> = candidates.iter().enumerate().map(|(i, c)| format!("{}. {c}", i + 1)).collect();
            base.replace("{schema}", schema.trim_end()).replace("{candidates}", &bullet_lines(&numbered))
        }
    }
}

/// One request/reply pair as recorded in traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exchange {
    pub request_id: u64,
    pub kind: RequestKind,
    pub instance: u32,
    pub template_version: String,
    pub prompt: String,
    pub payload: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

struct SessionState {
    next_id: u64,
    exchanges: Vec<Exchange>,
}

/// Per-question handle on a model: allocates request ids, renders prompts
/// and records every exchange.
pub struct Session<'a> {
    model: &'a dyn LanguageModel,
    conversation: String,
    state: Mutex<SessionState>,
}

impl<'a> Session<'a> {
    /// Request ids start at `first_id` and increase by one per call.
    pub fn new(model: &'a dyn LanguageModel, conversation: impl Into<String>, first_id: u64) -> Self {
        Self {
            model,
            conversation: conversation.into(),
            state: Mutex::new(SessionState { next_id: first_id, exchanges: Vec::new() }),
        }
    }

    pub fn conversation(&self) -> &str {
        &self.conversation
    }

    pub fn call(&self, question: &str, instance: u32, payload: RequestPayload) -> Result<ResponseBody, AdapterError> {
        let request_id = {
            let mut state = self.state.lock().expect("session lock");
            let id = state.next_id;
            state.next_id += 1;
            id
        };
        let request = AdapterRequest {
            request_id,
            kind: payload.kind(),
            question: question.to_string(),
            instance,
            conversation: self.conversation.clone(),
            prompt: render_prompt(question, &payload),
            payload,
            template_version: TEMPLATE_VERSION.to_string(),
        };
        let outcome = self.model.complete(&request).and_then(|response| {
            if response.request_id != request.request_id {
                return Err(AdapterError::Malformed {
                    reason: format!("request_id {} echoed as {}", request.request_id, response.request_id),
                    raw: String::new(),
                });
            }
            if response.body.kind() != request.kind {
                return Err(AdapterError::Malformed {
                    reason: format!("{} reply to a {} request", response.body.kind(), request.kind),
                    raw: String::new(),
                });
            }
            Ok(response)
        });
        if let Ok(response) = &outcome {
            if response.clamped {
                log::warn!("request {request_id}: confidence outside [0, 1] clamped");
            }
        }
        let exchange = Exchange {
            request_id,
            kind: request.kind,
            instance,
            template_version: request.template_version.clone(),
            prompt: request.prompt.clone(),
            payload: serde_json::to_value(&request.payload).unwrap_or(Value::Null),
            response: outcome.as_ref().ok().map(|r| r.body.to_json()),
            error: outcome.as_ref().err().map(|e| match e {
                AdapterError::Malformed { reason, raw } if !raw.is_empty() => format!("malformed reply: {reason}; raw body: {raw}"),
                other => other.to_string(),
            }),
            clamped: outcome.as_ref().is_ok_and(|r| r.clamped),
        };
        self.state.lock().expect("session lock").exchanges.push(exchange);
        outcome.map(|r| r.body)
    }

    /// Recorded exchanges sorted by request id.
    pub fn exchanges(&self) -> Vec<Exchange> {
        let mut out = self.state.lock().expect("session lock").exchanges.clone();
        out.sort_by_key(|e| e.request_id);
        out
    }
}
