use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ReasonerError;
use crate::adapter::{RequestPayload, ResponseBody, Session};
use crate::gql::{Direction, QueryAst};
use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::relevance::Subgraph;
use crate::text::normalize;

/// Branches kept per step while walking the schema chain.
pub const MAX_BRANCHES: usize = 8;
/// Longest walk, in steps.
pub const MAX_DEPTH: usize = 6;
/// Walks issued to the model per question.
pub const MAX_WALKS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSource {
    Direct,
    Collaborative,
    Stepwise,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateAnswer {
    /// Normalized answer text.
    pub value: String,
    /// Display form.
    pub label: String,
    pub model_prob: f64,
    pub source: AnswerSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_id: Option<u32>,
}

impl CandidateAnswer {
    pub fn new(label: &str, model_prob: f64, source: AnswerSource, path_id: Option<u32>) -> Self {
        Self { value: normalize(label), label: label.trim().to_string(), model_prob: model_prob.clamp(0.0, 1.0), source, path_id }
    }

    pub fn for_entity(graph: &KnowledgeGraph, id: EntityId, model_prob: f64, source: AnswerSource, path_id: Option<u32>) -> Self {
        let entity = graph.entity(id).expect("entity id from graph");
        Self {
            value: entity.canonical_name.clone(),
            label: entity.label.clone(),
            model_prob: model_prob.clamp(0.0, 1.0),
            source,
            path_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReasoningState {
    pub step_index: usize,
    pub text: String,
    pub confidence: f64,
    pub triple: Triple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReasoningPath {
    pub id: u32,
    pub steps: Vec<ReasoningState>,
    pub answer: Option<CandidateAnswer>,
    pub trajectory_prob: f64,
    pub consistency: f64,
}

impl ReasoningPath {
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.steps.iter().map(|s| &s.triple)
    }
}

pub(crate) fn pipe_form(graph: &KnowledgeGraph, triple: &Triple) -> String {
    let (h, r, t) = graph.names(triple).unwrap_or(("?", "?", "?"));
    format!("{h}|{r}|{t}")
}

/// One model call producing the next reasoning state for `triple`.
pub fn step(
    session: &Session<'_>,
    graph: &KnowledgeGraph,
    question: &str,
    prior: &[ReasoningState],
    triple: Triple,
    instance: u32,
) -> Result<ReasoningState, ReasonerError> {
    let payload = RequestPayload::Step {
        prior_states: prior.iter().map(|s| s.text.clone()).collect(),
        triple: pipe_form(graph, &triple),
    };
    let ResponseBody::Step { text, confidence } = session.call(question, instance, payload)? else {
        unreachable!("session checks reply kind");
    };
    Ok(ReasoningState { step_index: prior.len() + 1, text, confidence: confidence.clamp(0.0, 1.0), triple })
}

/// Product of per-step confidences.
pub fn trajectory_prob(states: &[ReasoningState]) -> f64 {
    states.iter().map(|s| s.confidence).product()
}

/// Fraction of the path's triples that belong to the subgraph.
pub fn path_consistency<'t>(
    triples: impl IntoIterator<Item = &'t Triple>,
    subgraph: &Subgraph,
) -> Result<f64, ReasonerError> {
    let (mut total, mut inside) = (0usize, 0usize);
    for t in triples {
        total += 1;
        if subgraph.contains(t) {
            inside += 1;
        }
    }
    if total == 0 {
        return Err(ReasonerError::EmptyPath);
    }
    Ok(inside as f64 / total as f64)
}

/// Best `(answer, path)` by model probability times path consistency. Ties go
/// to the smaller answer value, then the lower path id.
pub fn select_answer_joint(
    candidates: &[(CandidateAnswer, ReasoningPath)],
    subgraph: &Subgraph,
) -> Result<CandidateAnswer, ReasonerError> {
    let mut best: Option<(f64, &CandidateAnswer, u32)> = None;
    for (answer, path) in candidates {
        let joint = answer.model_prob * path_consistency(path.triples(), subgraph)?;
        let key = (joint, answer, path.id);
        best = match best {
            None => Some(key),
            Some(current) => {
                let better = joint
                    .total_cmp(&current.0)
                    .then_with(|| current.1.value.cmp(&answer.value))
                    .then_with(|| current.2.cmp(&path.id));
                if better == Ordering::Greater {
                    Some(key)
                } else {
                    Some(current)
                }
            }
        };
    }
    best.map(|(_, a, _)| a.clone()).ok_or(ReasonerError::NoCandidates)
}

/// A candidate walk: the triples in order and the entity it ends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub triples: Vec<Triple>,
    pub answer: EntityId,
}

/// Walks the compiled schema chain over `pool`. Each step branches on every
/// pool triple compatible with the schema edge, subgraph members first, at
/// most [`MAX_BRANCHES`] per step; chains are cut at [`MAX_DEPTH`].
pub fn schema_walks(ast: &QueryAst, graph: &KnowledgeGraph, pool: &BTreeSet<Triple>, subgraph: &Subgraph) -> Vec<Walk> {
    let variables = ast.variables();
    let slot = |name: &str| variables.iter().position(|v| v == name).expect("variable of the query");
    let mut fixed: Vec<Option<EntityId>> = vec![None; variables.len()];
    for node in ast.nodes() {
        if let Some(name) = &node.bound_name {
            match graph.resolve_entity(name) {
                Some(id) => fixed[slot(&node.variable)] = Some(id),
                None => return Vec::new(),
            }
        }
    }
    let mut steps = Vec::new();
    for step in ast.pattern().iter().take(MAX_DEPTH) {
        let Some(relation) = graph.resolve_relation(&step.relation) else {
            return Vec::new();
        };
        steps.push((slot(&step.source.variable), relation, step.direction, slot(&step.target.variable)));
    }
    let answer_slot = slot(ast.answer_variable());

    let mut walks = Vec::new();
    let mut trail = Vec::new();
    let mut assignment = fixed;
    extend(&steps, 0, graph, pool, subgraph, &mut assignment, &mut trail, answer_slot, &mut walks);
    walks
}

#[allow(clippy::too_many_arguments)]
fn extend(
    steps: &[(usize, crate::kg::RelationId, Direction, usize)],
    depth: usize,
    graph: &KnowledgeGraph,
    pool: &BTreeSet<Triple>,
    subgraph: &Subgraph,
    assignment: &mut Vec<Option<EntityId>>,
    trail: &mut Vec<Triple>,
    answer_slot: usize,
    walks: &mut Vec<Walk>,
) {
    if walks.len() >= MAX_WALKS {
        return;
    }
    let Some(&(source, relation, direction, target)) = steps.get(depth) else {
        if let Some(answer) = assignment[answer_slot] {
            walks.push(Walk { triples: trail.clone(), answer });
        }
        return;
    };
    // (source entity, target entity, triple)
    let mut options: Vec<(EntityId, EntityId, Triple)> = Vec::new();
    let candidates: Box<dyn Iterator<Item = &Triple>> = match (assignment[source], direction) {
        (Some(s), Direction::Forward) => Box::new(graph.outgoing(s)),
        (Some(s), Direction::Backward) => Box::new(graph.incoming(s)),
        (None, _) => Box::new(graph.with_relation(relation)),
    };
    for t in candidates {
        if t.relation != relation || !pool.contains(t) {
            continue;
        }
        let (s, e) = match direction {
            Direction::Forward => (t.head, t.tail),
            Direction::Backward => (t.tail, t.head),
        };
        if assignment[source].is_some_and(|a| a != s) || assignment[target].is_some_and(|a| a != e) {
            continue;
        }
        if source == target && s != e {
            continue;
        }
        options.push((s, e, *t));
    }
    options.sort_by_key(|(_, _, t)| (!subgraph.contains(t), *t));
    options.truncate(MAX_BRANCHES);
    for (s, e, t) in options {
        let set_source = assignment[source].is_none();
        assignment[source] = Some(s);
        let set_target = assignment[target].is_none();
        assignment[target] = Some(e);
        trail.push(t);
        extend(steps, depth + 1, graph, pool, subgraph, assignment, trail, answer_slot, walks);
        trail.pop();
        if set_source {
            assignment[source] = None;
        }
        if set_target {
            assignment[target] = None;
        }
    }
}

/// One-step walks from the seeds when no schema chain is available: every
/// pool triple touching a seed, ending on its other endpoint.
pub fn seed_walks(seeds: &[EntityId], pool: &BTreeSet<Triple>, subgraph: &Subgraph) -> Vec<Walk> {
    let mut options: Vec<(bool, Triple, EntityId)> = Vec::new();
    for t in pool {
        for &seed in seeds {
            if t.touches(seed) {
                let other = if t.head == seed { t.tail } else { t.head };
                if other != seed {
                    options.push((!subgraph.contains(t), *t, other));
                }
            }
        }
    }
    options.sort();
    options.dedup();
    options.truncate(MAX_BRANCHES);
    options.into_iter().map(|(_, t, answer)| Walk { triples: vec![t], answer }).collect()
}

/// Outcome of running the walks through the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepwiseRun {
    pub paths: Vec<ReasoningPath>,
    /// `(path id, error)` for walks the model failed on.
    pub failures: Vec<(u32, String)>,
}

/// Issues one Step request per walk triple; each path's answer takes the
/// confidence of its final state.
pub fn run_walks(
    session: &Session<'_>,
    graph: &KnowledgeGraph,
    question: &str,
    walks: &[Walk],
    subgraph: &Subgraph,
) -> StepwiseRun {
    let mut run = StepwiseRun::default();
    for (index, walk) in walks.iter().enumerate() {
        let id = index as u32;
        let mut states: Vec<ReasoningState> = Vec::new();
        let mut failed = None;
        for &triple in &walk.triples {
            match step(session, graph, question, &states, triple, id) {
                Ok(state) => states.push(state),
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(error) = failed {
            log::warn!("stepwise path {id} failed: {error}");
            run.failures.push((id, error));
            continue;
        }
        let final_conf = states.last().map_or(0.0, |s| s.confidence);
        let consistency = path_consistency(&walk.triples, subgraph).unwrap_or(0.0);
        run.paths.push(ReasoningPath {
            id,
            trajectory_prob: trajectory_prob(&states),
            consistency,
            answer: Some(CandidateAnswer::for_entity(graph, walk.answer, final_conf, AnswerSource::Stepwise, Some(id))),
            steps: states,
        });
    }
    run
}

/// Groups answers by value for reporting.
pub fn answers_by_value(paths: &[ReasoningPath]) -> BTreeMap<String, Vec<u32>> {
    let mut out: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for p in paths {
        if let Some(a) = &p.answer {
            out.entry(a.value.clone()).or_default().push(p.id);
        }
    }
    out
}
