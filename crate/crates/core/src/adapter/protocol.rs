use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    SchemaExtraction,
    Step,
    Hypothesis,
    AnswerRank,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestKind::SchemaExtraction => "schema_extraction",
            RequestKind::Step => "step",
            RequestKind::Hypothesis => "hypothesis",
            RequestKind::AnswerRank => "answer_rank",
        })
    }
}

/// Kind-specific request content. Triples travel as `head|relation|tail`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RequestPayload {
    SchemaExtraction { exemplar_triples: Vec<String> },
    Step { prior_states: Vec<String>, triple: String },
    Hypothesis { prior_hypotheses: Vec<String>, prior_evidence: Vec<Vec<String>> },
    AnswerRank { candidates: Vec<String>, schema: String },
}

impl RequestPayload {
    pub fn kind(&self) -> RequestKind {
        match self {
            RequestPayload::SchemaExtraction { .. } => RequestKind::SchemaExtraction,
            RequestPayload::Step { .. } => RequestKind::Step,
            RequestPayload::Hypothesis { .. } => RequestKind::Hypothesis,
            RequestPayload::AnswerRank { .. } => RequestKind::AnswerRank,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterRequest {
    pub request_id: u64,
    pub kind: RequestKind,
    pub question: String,
    /// Loop instance or path index this request belongs to.
    pub instance: u32,
    /// Conversation scope for occurrence counting (the example id in runs).
    pub conversation: String,
    pub payload: RequestPayload,
    /// Rendered prompt text.
    pub prompt: String,
    pub template_version: String,
}

impl AdapterRequest {
    /// Wire object: `{request_id, kind, question, payload, template_version}`.
    /// The rendered prompt and instance ride inside `payload`.
    pub fn to_wire(&self) -> Value {
        let mut payload = serde_json::to_value(&self.payload).unwrap_or(Value::Null);
        if let Value::Object(map) = &mut payload {
            map.insert("instance".into(), json!(self.instance));
            map.insert("prompt".into(), json!(self.prompt));
        }
        json!({
            "request_id": self.request_id,
            "kind": self.kind,
            "question": self.question,
            "payload": payload,
            "template_version": self.template_version,
        })
    }

    pub fn candidate_count(&self) -> usize {
        match &self.payload {
            RequestPayload::AnswerRank { candidates, .. } => candidates.len(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ResponseBody {
    SchemaExtraction { text: String },
    Step { text: String, confidence: f64 },
    Hypothesis { text: String, proposed_answer: Option<String>, confidence: f64 },
    AnswerRank { scores: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdapterResponse {
    pub request_id: u64,
    pub body: ResponseBody,
    /// Whether any confidence had to be clamped into `[0, 1]`.
    #[serde(skip)]
    pub clamped: bool,
}

fn text_field(body: &Value, key: &str) -> Result<String, String> {
    match body.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(format!("field `{key}` must be a string, found {other}")),
        None => Err(format!("missing field `{key}`")),
    }
}

fn number(value: &Value, what: &str) -> Result<f64, String> {
    value
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{what} must be a finite number, found {value}"))
}

fn clamp(value: f64, clamped: &mut bool) -> f64 {
    let c = value.clamp(0.0, 1.0);
    if c != value {
        *clamped = true;
    }
    c
}

impl ResponseBody {
    /// Validates a reply body against the request kind and clamps every
    /// confidence into `[0, 1]`. Returns the body and whether clamping happened.
    pub fn from_json(kind: RequestKind, body: &Value, candidates: usize) -> Result<(Self, bool), String> {
        if !body.is_object() {
            return Err(format!("body must be an object, found {body}"));
        }
        let mut clamped = false;
        let parsed = match kind {
            RequestKind::SchemaExtraction => ResponseBody::SchemaExtraction { text: text_field(body, "text")? },
            RequestKind::Step => {
                let confidence = number(body.get("confidence").unwrap_or(&Value::Null), "confidence")?;
                ResponseBody::Step { text: text_field(body, "text")?, confidence: clamp(confidence, &mut clamped) }
            }
            RequestKind::Hypothesis => {
                let confidence = number(body.get("confidence").unwrap_or(&Value::Null), "confidence")?;
                let proposed_answer = match body.get("proposed_answer") {
                    None | Some(Value::Null) => None,
                    Some(Value::String(s)) if s.trim().is_empty() => None,
                    Some(Value::String(s)) => Some(s.clone()),
                    Some(other) => return Err(format!("proposed_answer must be a string or null, found {other}")),
                };
                ResponseBody::Hypothesis {
                    text: text_field(body, "text")?,
                    proposed_answer,
                    confidence: clamp(confidence, &mut clamped),
                }
            }
            RequestKind::AnswerRank => {
                let Some(Value::Array(items)) = body.get("scores") else {
                    return Err("missing array field `scores`".into());
                };
                if items.len() != candidates {
                    return Err(format!("expected {candidates} scores, found {}", items.len()));
                }
                let scores = items
                    .iter()
                    .map(|v| number(v, "score").map(|s| clamp(s, &mut clamped)))
                    .collect::<Result<Vec<_>, _>>()?;
                ResponseBody::AnswerRank { scores }
            }
        };
        Ok((parsed, clamped))
    }

    pub fn kind(&self) -> RequestKind {
        match self {
            ResponseBody::SchemaExtraction { .. } => RequestKind::SchemaExtraction,
            ResponseBody::Step { .. } => RequestKind::Step,
            ResponseBody::Hypothesis { .. } => RequestKind::Hypothesis,
            ResponseBody::AnswerRank { .. } => RequestKind::AnswerRank,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}
