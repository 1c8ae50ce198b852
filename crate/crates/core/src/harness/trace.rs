use serde::Serialize;

use crate::adapter::Exchange;
use crate::collab::{CollabPath, Vote};
use crate::direct::DirectStage;
use crate::reasoner::{CandidateAnswer, QuestionSchema, ReasoningPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaSource {
    Model,
    /// Extraction failed; the linked question entities stand in.
    Fallback,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Direct,
    Refined,
    /// Best unvalidated direct candidate after every path came back empty.
    Fallback,
    Abstained,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Direct => "direct",
            Stage::Refined => "refined",
            Stage::Fallback => "fallback",
            Stage::Abstained => "abstained",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPath {
    pub path: ReasoningPath,
    pub score_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingVerdict {
    pub instance: u32,
    pub answer: String,
    pub accepted: bool,
}

/// Everything needed to audit or replay one example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub id: String,
    pub question: String,
    pub errored: bool,
    pub errors: Vec<String>,
    pub schema_source: SchemaSource,
    pub schema: QuestionSchema,
    pub schema_warnings: Vec<String>,
    pub subgraph_size: usize,
    pub subgraph: Vec<[String; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct: Option<DirectStage>,
    pub notes: Vec<String>,
    pub stepwise: Vec<ScoredPath>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stepwise_pick: Option<CandidateAnswer>,
    pub collaborative: Vec<CollabPath>,
    pub grounding: Vec<GroundingVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vote: Option<Vote>,
    pub exchanges: Vec<Exchange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<CandidateAnswer>,
    pub stage: Stage,
}
