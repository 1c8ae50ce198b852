//! Question schemas, schema extraction and stepwise path reasoning.

mod extract;
mod schema;
mod stepwise;

use thiserror::Error;

use crate::adapter::AdapterError;
use crate::kg::KgError;
use crate::relevance::RelevanceError;

pub use extract::{exemplar_triples, extract_schema, ground_schema, parse_schema_reply, ParsedReply, EXEMPLAR_COUNT};
pub use schema::{Constraint, ConstraintKind, QuestionSchema, SchemaNode, SchemaTriple};
pub use stepwise::{
    answers_by_value, path_consistency, run_walks, schema_walks, seed_walks, select_answer_joint, step,
    trajectory_prob, AnswerSource, CandidateAnswer, ReasoningPath, ReasoningState, StepwiseRun, Walk, MAX_BRANCHES,
    MAX_DEPTH, MAX_WALKS,
};
pub(crate) use stepwise::pipe_form;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReasonerError {
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("schema extraction failed: {0}")]
    SchemaExtraction(String),
    #[error("reasoning path has no triples")]
    EmptyPath,
    #[error("no candidate answers")]
    NoCandidates,
    #[error(transparent)]
    Graph(#[from] KgError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
}
