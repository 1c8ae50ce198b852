use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::{AdapterRequest, AdapterResponse, RequestKind, RequestPayload, ResponseBody};
use super::{AdapterError, LanguageModel};
use crate::text::fingerprint;

/// Replies used when no script entry matches and the script is not strict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockDefaults {
    pub step_confidence: f64,
    pub hypothesis_confidence: f64,
}

impl Default for MockDefaults {
    fn default() -> Self {
        Self { step_confidence: 0.5, hypothesis_confidence: 0.0 }
    }
}

/// One canned reply. `occurrence: None` matches every occurrence that has no
/// more specific entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub question: String,
    pub kind: RequestKind,
    #[serde(default)]
    pub instance: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence: Option<u32>,
    pub body: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub defaults: MockDefaults,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, AdapterError> {
        serde_json::from_str(text).map_err(|e| AdapterError::Configuration(format!("mock script: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AdapterError::Configuration(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn push(&mut self, question: &str, kind: RequestKind, instance: u32, occurrence: Option<u32>, body: Value) {
        self.entries.push(ScriptEntry { question: question.to_string(), kind, instance, occurrence, body });
    }
}

type EntryKey = (String, RequestKind, u32, Option<u32>);
type CounterKey = (String, String, RequestKind, u32);

/// Deterministic scripted model. Replies are looked up by (question
/// fingerprint, kind, instance, occurrence), where occurrence counts prior
/// requests with the same key inside the same conversation.
pub struct MockAdapter {
    strict: bool,
    defaults: MockDefaults,
    entries: HashMap<EntryKey, Value>,
    counters: Mutex<HashMap<CounterKey, u32>>,
}

impl MockAdapter {
    pub fn new(script: MockScript) -> Self {
        let mut entries = HashMap::new();
        for entry in script.entries {
            entries
                .entry((fingerprint(&entry.question), entry.kind, entry.instance, entry.occurrence))
                .or_insert(entry.body);
        }
        Self { strict: script.strict, defaults: script.defaults, entries, counters: Mutex::new(HashMap::new()) }
    }

    /// Forgets occurrence counts so the same request sequence replays.
    pub fn reset(&self) {
        self.counters.lock().expect("mock lock").clear();
    }

    fn default_body(&self, request: &AdapterRequest) -> Value {
        match &request.payload {
            RequestPayload::SchemaExtraction { .. } => json!({"text": ""}),
            RequestPayload::Step { triple, .. } => json!({
                "text": format!("Considering {triple}."),
                "confidence": self.defaults.step_confidence,
            }),
            RequestPayload::Hypothesis { .. } => json!({
                "text": request.question,
                "proposed_answer": null,
                "confidence": self.defaults.hypothesis_confidence,
            }),
            RequestPayload::AnswerRank { candidates, .. } => {
                let n = candidates.len().max(1) as f64;
                json!({"scores": vec![1.0 / n; candidates.len()]})
            }
        }
    }
}

impl LanguageModel for MockAdapter {
    fn complete(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError> {
        let fp = fingerprint(&request.question);
        let occurrence = {
            let mut counters = self.counters.lock().expect("mock lock");
            let slot = counters
                .entry((request.conversation.clone(), fp.clone(), request.kind, request.instance))
                .or_insert(0);
            let current = *slot;
            *slot += 1;
            current
        };
        let scripted = self
            .entries
            .get(&(fp.clone(), request.kind, request.instance, Some(occurrence)))
            .or_else(|| self.entries.get(&(fp, request.kind, request.instance, None)));
        let body = match scripted {
            Some(body) => body.clone(),
            None if self.strict => {
                return Err(AdapterError::ScriptExhausted {
                    kind: request.kind,
                    question: request.question.clone(),
                    instance: request.instance,
                    occurrence,
                })
            }
            None => self.default_body(request),
        };
        let (body, clamped) = ResponseBody::from_json(request.kind, &body, request.candidate_count())
            .map_err(|reason| AdapterError::Malformed { reason, raw: body.to_string() })?;
        Ok(AdapterResponse { request_id: request.request_id, body, clamped })
    }
}
