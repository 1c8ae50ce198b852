//! Direct stage: compile the schema, execute it, rank the candidates with the
//! model and keep only those that satisfy the schema.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::adapter::{RequestPayload, ResponseBody, Session};
use crate::gql::{compile_schema, execute, CompileError, QueryAst, QueryResult};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::reasoner::{AnswerSource, CandidateAnswer, ConstraintKind, QuestionSchema, SchemaNode};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DirectError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("no candidates to select from")]
    Empty,
}

/// Everything the direct stage produced, for the trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DirectRun {
    pub query: String,
    /// Executed rows as `(variable, label)` pairs.
    pub rows: Vec<Vec<(String, String)>>,
    pub warnings: Vec<String>,
    pub candidates: Vec<CandidateAnswer>,
    /// Set when the ranking request failed and uniform scores were used.
    pub rank_fallback: bool,
}

/// Compiles and executes `schema`.
pub fn execute_schema(schema: &QuestionSchema, graph: &KnowledgeGraph) -> Result<(QueryAst, QueryResult), CompileError> {
    let ast = compile_schema(schema)?;
    let result = execute(&ast, graph);
    for w in &result.warnings {
        log::info!("query {ast}: {w}");
    }
    Ok((ast, result))
}

/// Scores `entities` with one ranking request. Scores fall back to 1/N when
/// the request fails; the flag reports that.
pub fn rank_candidates(
    question: &str,
    schema: &QuestionSchema,
    graph: &KnowledgeGraph,
    entities: &[EntityId],
    session: &Session<'_>,
) -> (Vec<CandidateAnswer>, bool) {
    if entities.is_empty() {
        return (Vec::new(), false);
    }
    let payload = RequestPayload::AnswerRank {
        candidates: entities.iter().map(|&e| graph.label(e).to_string()).collect(),
        schema: schema.render(),
    };
    let (scores, fallback) = match session.call(question, 0, payload) {
        Ok(ResponseBody::AnswerRank { scores }) if scores.len() == entities.len() => (scores, false),
        Ok(_) => {
            log::warn!("answer ranking returned the wrong number of scores; using uniform scores");
            (vec![1.0 / entities.len() as f64; entities.len()], true)
        }
        Err(e) => {
            log::warn!("answer ranking failed ({e}); using uniform scores");
            (vec![1.0 / entities.len() as f64; entities.len()], true)
        }
    };
    let candidates = entities
        .iter()
        .zip(scores)
        .map(|(&e, s)| CandidateAnswer::for_entity(graph, e, s, AnswerSource::Direct, None))
        .collect();
    (candidates, fallback)
}

/// Executes the compiled schema and ranks the distinct answer entities.
pub fn run_direct(
    question: &str,
    schema: &QuestionSchema,
    graph: &KnowledgeGraph,
    session: &Session<'_>,
) -> Result<DirectRun, DirectError> {
    let (ast, result) = execute_schema(schema, graph)?;
    let entities = result.column(ast.answer_variable());
    let (candidates, rank_fallback) = rank_candidates(question, schema, graph, &entities, session);
    let rows = result
        .rows
        .iter()
        .map(|row| row.bindings.iter().map(|(v, e)| (v.clone(), graph.label(*e).to_string())).collect())
        .collect();
    Ok(DirectRun { query: ast.to_string(), rows, warnings: result.warnings, candidates, rank_fallback })
}

/// Candidate answers from executing the schema, scored by the model.
pub fn direct_answers(
    question: &str,
    schema: &QuestionSchema,
    graph: &KnowledgeGraph,
    session: &Session<'_>,
) -> Result<Vec<CandidateAnswer>, DirectError> {
    run_direct(question, schema, graph, session).map(|run| run.candidates)
}

#[derive(Clone, Copy)]
enum Slot {
    Var(usize),
    Fixed(EntityId),
}

/// True when putting the candidate's entity in the answer slot leaves every
/// schema triple satisfiable under one assignment and every equality
/// constraint holds.
pub fn validate(candidate: &CandidateAnswer, schema: &QuestionSchema, graph: &KnowledgeGraph) -> bool {
    let Some(answer) = graph.resolve_entity(&candidate.value) else {
        return false;
    };
    if !schema.is_usable() {
        return false;
    }
    let variables = schema.variables();
    let index: HashMap<&str, usize> = variables.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let mut assignment: Vec<Option<EntityId>> = vec![None; variables.len()];
    assignment[index[schema.answer_variable.as_str()]] = Some(answer);

    for c in schema.constraints.iter().filter(|c| c.kind == ConstraintKind::Equality) {
        let Some(&slot) = index.get(c.subject.as_str()) else {
            continue;
        };
        let Some(required) = graph.resolve_entity(&c.value) else {
            return false;
        };
        match assignment[slot] {
            Some(current) if current != required => return false,
            _ => assignment[slot] = Some(required),
        }
    }

    let mut edges: Vec<(Slot, RelationId, Slot)> = Vec::with_capacity(schema.triples.len());
    for t in &schema.triples {
        let node = |n: &SchemaNode| match n {
            SchemaNode::Variable(v) => Some(Slot::Var(index[v.as_str()])),
            SchemaNode::Entity(name) => graph.resolve_entity(name).map(Slot::Fixed),
        };
        let (Some(s), Some(r), Some(o)) = (node(&t.subject), graph.resolve_relation(&t.relation), node(&t.object)) else {
            return false;
        };
        edges.push((s, r, o));
    }
    satisfiable(&edges, graph, &mut assignment)
}

fn satisfiable(edges: &[(Slot, RelationId, Slot)], graph: &KnowledgeGraph, assignment: &mut Vec<Option<EntityId>>) -> bool {
    let Some((&(s, r, o), rest)) = edges.split_first() else {
        return true;
    };
    let value = |slot: Slot, a: &[Option<EntityId>]| match slot {
        Slot::Fixed(e) => Some(e),
        Slot::Var(i) => a[i],
    };
    let (head, tail) = (value(s, assignment), value(o, assignment));
    let options: Vec<(EntityId, EntityId)> = match head {
        Some(h) => graph.outgoing(h).filter(|t| t.relation == r).map(|t| (t.head, t.tail)).collect(),
        None => graph.with_relation(r).map(|t| (t.head, t.tail)).collect(),
    };
    for (h, t) in options {
        if tail.is_some_and(|x| x != t) {
            continue;
        }
        if let (Slot::Var(a), Slot::Var(b)) = (s, o) {
            if a == b && h != t {
                continue;
            }
        }
        let mut set = Vec::new();
        for (slot, e) in [(s, h), (o, t)] {
            if let Slot::Var(i) = slot {
                if assignment[i].is_none() {
                    assignment[i] = Some(e);
                    set.push(i);
                }
            }
        }
        let ok = satisfiable(rest, graph, assignment);
        for i in set {
            assignment[i] = None;
        }
        if ok {
            return true;
        }
    }
    false
}

/// Order-preserving filter keeping the candidates that validate.
pub fn valid_set(candidates: &[CandidateAnswer], schema: &QuestionSchema, graph: &KnowledgeGraph) -> Vec<CandidateAnswer> {
    candidates.iter().filter(|c| validate(c, schema, graph)).cloned().collect()
}

/// Highest model probability; ties go to the smaller answer value.
pub fn select_validated(valid: &[CandidateAnswer]) -> Result<CandidateAnswer, DirectError> {
    valid
        .iter()
        .max_by(|a, b| match a.model_prob.total_cmp(&b.model_prob) {
            Ordering::Equal => b.value.cmp(&a.value),
            other => other,
        })
        .cloned()
        .ok_or(DirectError::Empty)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "decision", content = "answer", rename_all = "snake_case")]
pub enum DirectOutcome {
    Answer(CandidateAnswer),
    NeedsRefinement,
}

/// Full record of one direct-stage pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectStage {
    pub outcome: DirectOutcome,
    pub run: DirectRun,
    /// `(answer value, verdict)` per candidate, in candidate order.
    pub verdicts: Vec<(String, bool)>,
}

impl DirectStage {
    /// Best candidate regardless of validation, used when every later path
    /// comes back empty.
    pub fn best_unvalidated(&self) -> Option<CandidateAnswer> {
        select_validated(&self.run.candidates).ok()
    }
}

/// Answers when some candidate validates, otherwise asks for refinement.
pub fn direct_stage(
    question: &str,
    schema: &QuestionSchema,
    graph: &KnowledgeGraph,
    session: &Session<'_>,
) -> Result<DirectStage, DirectError> {
    let run = run_direct(question, schema, graph, session)?;
    let verdicts: Vec<(String, bool)> =
        run.candidates.iter().map(|c| (c.value.clone(), validate(c, schema, graph))).collect();
    let valid: Vec<CandidateAnswer> =
        run.candidates.iter().zip(&verdicts).filter(|(_, (_, ok))| *ok).map(|(c, _)| c.clone()).collect();
    let outcome = match select_validated(&valid) {
        Ok(answer) => DirectOutcome::Answer(answer),
        Err(_) => DirectOutcome::NeedsRefinement,
    };
    Ok(DirectStage { outcome, run, verdicts })
}
