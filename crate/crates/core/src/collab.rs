//! Collaborative stage: the hypothesize and retrieve loop, path scoring and
//! weighted voting over candidate answers.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::adapter::{RequestPayload, ResponseBody, Session};
use crate::kg::{KnowledgeGraph, Triple};
use crate::reasoner::{pipe_form, AnswerSource, CandidateAnswer, ReasonerError};
use crate::relevance::{apply_policy, Scorer, SelectionPolicy};
use crate::text::normalize;

/// Evidence triples kept per retrieval.
pub const EVIDENCE_CAP: usize = 16;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CollabError {
    #[error("path has no iterations")]
    EmptyPath,
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub iteration: usize,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposed_answer: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvidenceSet {
    pub iteration: usize,
    /// Most relevant first; ties by triple id.
    pub triples: Vec<Triple>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathEntry {
    Hypothesis(Hypothesis),
    Evidence(EvidenceSet),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollabPath {
    pub instance: u32,
    pub interleaved: Vec<PathEntry>,
    /// `None` is the no-answer sentinel.
    pub answer: Option<CandidateAnswer>,
    pub score_beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl CollabPath {
    pub fn hypotheses(&self) -> impl Iterator<Item = &Hypothesis> {
        self.interleaved.iter().filter_map(|e| match e {
            PathEntry::Hypothesis(h) => Some(h),
            PathEntry::Evidence(_) => None,
        })
    }

    pub fn evidence(&self) -> impl Iterator<Item = &EvidenceSet> {
        self.interleaved.iter().filter_map(|e| match e {
            PathEntry::Evidence(s) => Some(s),
            PathEntry::Hypothesis(_) => None,
        })
    }

    pub fn iterations(&self) -> usize {
        self.hypotheses().count()
    }
}

/// One Hypothesis request carrying the question and all prior turns.
pub fn hypothesize(
    session: &Session<'_>,
    graph: &KnowledgeGraph,
    question: &str,
    prior_evidence: &[EvidenceSet],
    prior_hypotheses: &[Hypothesis],
    instance: u32,
) -> Result<Hypothesis, ReasonerError> {
    let payload = RequestPayload::Hypothesis {
        prior_hypotheses: prior_hypotheses.iter().map(|h| h.text.clone()).collect(),
        prior_evidence: prior_evidence
            .iter()
            .map(|set| set.triples.iter().map(|t| pipe_form(graph, t)).collect())
            .collect(),
    };
    let ResponseBody::Hypothesis { text, proposed_answer, confidence } = session.call(question, instance, payload)? else {
        unreachable!("session checks reply kind");
    };
    Ok(Hypothesis {
        iteration: prior_hypotheses.len() + 1,
        text,
        proposed_answer: proposed_answer.map(|a| normalize(&a)).filter(|a| !a.is_empty()),
        confidence: confidence.clamp(0.0, 1.0),
    })
}

/// One-hop neighbourhood of the entities named in the hypothesis, best
/// [`EVIDENCE_CAP`] by relevance to its text.
pub fn retrieve_evidence(hypothesis: &Hypothesis, graph: &KnowledgeGraph) -> EvidenceSet {
    let seeds = graph.link_entities(&hypothesis.text);
    let scorer = Scorer::new(graph, &hypothesis.text);
    let scored: Vec<(Triple, f64)> = graph
        .neighborhood(&seeds, 1)
        .unwrap_or_default()
        .into_iter()
        .map(|t| (t, scorer.score(&t).unwrap_or(0.0)))
        .collect();
    let chosen = apply_policy(scored, SelectionPolicy::TopK { k: EVIDENCE_CAP });
    EvidenceSet { iteration: hypothesis.iteration, triples: chosen.into_iter().map(|(t, _)| t).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub t_max: usize,
    pub m: usize,
    pub early_stop_conf: f64,
    /// When false the graph is not consulted and every evidence set is empty.
    pub retrieval: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { t_max: 5, m: 3, early_stop_conf: 0.7, retrieval: true }
    }
}

fn run_instance(session: &Session<'_>, graph: &KnowledgeGraph, question: &str, config: &LoopConfig, instance: u32) -> CollabPath {
    let mut hypotheses: Vec<Hypothesis> = Vec::new();
    let mut evidence: Vec<EvidenceSet> = Vec::new();
    let mut interleaved = Vec::new();
    let mut failure = None;
    while hypotheses.len() < config.t_max {
        let h = match hypothesize(session, graph, question, &evidence, &hypotheses, instance) {
            Ok(h) => h,
            Err(e) => {
                log::warn!("collaborative instance {instance} failed: {e}");
                failure = Some(e.to_string());
                break;
            }
        };
        let set = if config.retrieval {
            retrieve_evidence(&h, graph)
        } else {
            EvidenceSet { iteration: h.iteration, triples: Vec::new() }
        };
        let stop = h.proposed_answer.is_some() && h.confidence >= config.early_stop_conf;
        interleaved.push(PathEntry::Hypothesis(h.clone()));
        interleaved.push(PathEntry::Evidence(set.clone()));
        hypotheses.push(h);
        evidence.push(set);
        if stop {
            break;
        }
    }
    let answer = match (&failure, hypotheses.last()) {
        (None, Some(last)) => hypotheses.iter().rev().find_map(|h| h.proposed_answer.clone()).map(|value| {
            let label = graph.resolve_entity(&value).map_or(value.clone(), |e| graph.label(e).to_string());
            CandidateAnswer::new(&label, last.confidence, AnswerSource::Collaborative, Some(instance))
        }),
        _ => None,
    };
    CollabPath { instance, interleaved, answer, score_beta: 0.0, failure }
}

/// Runs `config.m` loop instances, each alternating hypothesis and retrieval
/// until a confident proposed answer or `config.t_max` turns. Paths come back
/// in instance order with `score_beta` unset.
pub fn iterate(question: &str, graph: &KnowledgeGraph, session: &Session<'_>, config: &LoopConfig) -> Vec<CollabPath> {
    (0..config.m as u32).map(|i| run_instance(session, graph, question, config, i)).collect()
}

/// Fraction of iterations whose whole evidence set is in the graph.
pub fn graph_consistency(path: &CollabPath, graph: &KnowledgeGraph) -> Result<f64, CollabError> {
    let sets: Vec<&EvidenceSet> = path.evidence().collect();
    if sets.is_empty() {
        return Err(CollabError::EmptyPath);
    }
    let contained = sets.iter().filter(|s| s.triples.iter().all(|t| graph.contains(t))).count();
    Ok(contained as f64 / sets.len() as f64)
}

/// `lambda * confidence + (1 - lambda) * consistency`.
pub fn blend(confidence: f64, consistency: f64, lambda: f64) -> Result<f64, CollabError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CollabError::LambdaOutOfRange(lambda));
    }
    Ok(lambda * confidence + (1.0 - lambda) * consistency)
}

/// Blended score of a collaborative path. Sentinel paths score 0.
pub fn path_score(path: &CollabPath, graph: &KnowledgeGraph, lambda: f64) -> Result<f64, CollabError> {
    let consistency = graph_consistency(path, graph)?;
    match &path.answer {
        Some(answer) => blend(answer.model_prob, consistency, lambda),
        None => blend(0.0, consistency, lambda).map(|_| 0.0),
    }
}

/// Rejects proposed answers that do not name an entity touched by the
/// path's own evidence. Returns `(instance, proposed value, accepted)`.
pub fn ground_paths(paths: &mut [CollabPath], graph: &KnowledgeGraph) -> Vec<(u32, String, bool)> {
    let mut verdicts = Vec::new();
    for path in paths.iter_mut() {
        let Some(answer) = &path.answer else {
            continue;
        };
        let grounded = graph
            .resolve_entity(&answer.value)
            .is_some_and(|e| path.evidence().any(|s| s.triples.iter().any(|t| t.touches(e))));
        verdicts.push((path.instance, answer.value.clone(), grounded));
        if !grounded {
            log::info!("collaborative instance {}: answer {:?} not supported by the graph", path.instance, answer.value);
            path.answer = None;
            path.score_beta = 0.0;
        }
    }
    verdicts
}

/// Winner of a weighted vote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vote {
    pub answer: CandidateAnswer,
    pub mass: f64,
    /// Summed score per distinct answer value.
    pub tally: BTreeMap<String, f64>,
}

fn representative_order(a: &(&CandidateAnswer, f64), b: &(&CandidateAnswer, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| a.0.source.cmp(&b.0.source))
        .then_with(|| a.0.path_id.cmp(&b.0.path_id))
        .then_with(|| a.0.label.cmp(&b.0.label))
        .then_with(|| b.0.model_prob.total_cmp(&a.0.model_prob))
}

/// Sums scores per answer value, skipping sentinels, and returns the value
/// with the largest mass; ties go to the smaller value. `None` when only
/// sentinels remain.
pub fn aggregate(scored: &[(Option<CandidateAnswer>, f64)]) -> Option<Vote> {
    let mut members: BTreeMap<&str, Vec<(&CandidateAnswer, f64)>> = BTreeMap::new();
    for (answer, score) in scored {
        if let Some(a) = answer {
            members.entry(a.value.as_str()).or_default().push((a, *score));
        }
    }
    // summed in sorted order so the result does not depend on input order
    let tally: BTreeMap<String, f64> = members
        .iter()
        .map(|(v, group)| {
            let mut scores: Vec<f64> = group.iter().map(|(_, s)| *s).collect();
            scores.sort_by(f64::total_cmp);
            (v.to_string(), scores.iter().sum())
        })
        .collect();
    let (value, mass) = tally
        .iter()
        .fold(None::<(&String, f64)>, |best, (v, &m)| match best {
            Some((_, bm)) if bm >= m => best,
            _ => Some((v, m)),
        })?;
    let mut group = members.remove(value.as_str()).expect("tallied value has members");
    group.sort_by(representative_order);
    Some(Vote { answer: group[0].0.clone(), mass, tally: tally.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{MockAdapter, MockScript, RequestKind};
    use serde_json::json;

    const Q: &str = "Which river flows through the capital of Freedonia?";

    fn cand(v: &str) -> Option<CandidateAnswer> {
        Some(CandidateAnswer::new(v, 0.5, AnswerSource::Collaborative, None))
    }

    fn hyp(text: &str) -> Hypothesis {
        Hypothesis { iteration: 1, text: text.into(), proposed_answer: None, confidence: 0.0 }
    }

    #[test]
    fn voting_examples() {
        let vote = aggregate(&[(cand("a"), 0.7), (cand("b"), 0.4), (cand("a"), 0.2)]).unwrap();
        assert_eq!(vote.answer.value, "a");
        assert!((vote.mass - 0.9).abs() < 1e-12);
        assert_eq!(aggregate(&[(cand("z"), 0.1)]).unwrap().answer.value, "z");
        assert_eq!(aggregate(&[(cand("b"), 0.5), (cand("a"), 0.5)]).unwrap().answer.value, "a");
        assert!(aggregate(&[(None, 0.9)]).is_none());
        assert!(aggregate(&[]).is_none());
        assert_eq!(aggregate(&[(None, 5.0), (cand("c"), 0.1)]).unwrap().answer.value, "c");
    }

    #[test]
    fn score_blend() {
        assert!((blend(0.8, 0.6, 0.5).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(blend(0.8, 0.6, 1.0).unwrap(), 0.8);
        assert_eq!(blend(0.8, 0.6, 0.0).unwrap(), 0.6);
        assert_eq!(blend(0.8, 0.6, 1.5), Err(CollabError::LambdaOutOfRange(1.5)));
    }

    #[test]
    fn evidence_retrieval() {
        let g = KnowledgeGraph::load_triples("Paris\tcapital_of\tFrance\n".as_bytes()).unwrap();
        assert!(retrieve_evidence(&hyp("Nothing relevant here"), &g).triples.is_empty());
        assert_eq!(retrieve_evidence(&hyp("It is in France"), &g).triples, g.triples());
    }

    #[test]
    fn consistency_counts_contained_iterations() {
        let g = KnowledgeGraph::load_triples("a\tr\tb\nb\tr\tc\n".as_bytes()).unwrap();
        let foreign = Triple::new(crate::kg::EntityId(0), crate::kg::RelationId(0), crate::kg::EntityId(0));
        let set = |i, triples: Vec<Triple>| PathEntry::Evidence(EvidenceSet { iteration: i, triples });
        let h = |i| PathEntry::Hypothesis(Hypothesis { iteration: i, text: String::new(), proposed_answer: None, confidence: 0.0 });
        let mut path = CollabPath {
            instance: 0,
            interleaved: vec![h(1), set(1, vec![g.triples()[0]]), h(2), set(2, vec![foreign])],
            answer: None,
            score_beta: 0.0,
            failure: None,
        };
        assert_eq!(graph_consistency(&path, &g).unwrap(), 0.5);
        path.interleaved = vec![h(1), set(1, vec![])];
        assert_eq!(graph_consistency(&path, &g).unwrap(), 1.0);
        path.interleaved.clear();
        assert_eq!(graph_consistency(&path, &g), Err(CollabError::EmptyPath));
    }

    fn loop_graph() -> KnowledgeGraph {
        KnowledgeGraph::load_triples("Velmora\tcapital_of\tFreedonia\nAstra River\tflows_through\tVelmora\n".as_bytes()).unwrap()
    }

    #[test]
    fn turns_per_instance() {
        let g = loop_graph();
        let mut script = MockScript::default();
        for instance in 0..3u32 {
            for turn in 0..=instance {
                let last = turn == instance;
                script.push(
                    Q,
                    RequestKind::Hypothesis,
                    instance,
                    Some(turn),
                    json!({
                        "text": if last { "The Astra River flows through Velmora." } else { "The capital of Freedonia is Velmora." },
                        "proposed_answer": if last { json!("Astra River") } else { json!(null) },
                        "confidence": if last { 0.9 } else { 0.3 },
                    }),
                );
            }
        }
        let mock = MockAdapter::new(script);
        let session = Session::new(&mock, "t", 0);
        let mut paths = iterate(Q, &g, &session, &LoopConfig::default());
        let lengths: Vec<usize> = paths.iter().map(CollabPath::iterations).collect();
        assert_eq!(lengths, [1, 2, 3]);
        assert!(paths.iter().all(|p| p.answer.as_ref().unwrap().label == "Astra River"));
        let iterations: Vec<usize> = paths[2].hypotheses().map(|h| h.iteration).collect();
        assert_eq!(iterations, [1, 2, 3]);
        let verdicts = ground_paths(&mut paths, &g);
        assert!(verdicts.iter().all(|v| v.2));
        for p in &paths {
            assert_eq!(graph_consistency(p, &g).unwrap(), 1.0);
            assert!((path_score(p, &g, 0.5).unwrap() - 0.95).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_model_hits_the_cap() {
        let g = loop_graph();
        let mock = MockAdapter::new(MockScript::default());
        let session = Session::new(&mock, "t", 0);
        let config = LoopConfig { m: 1, ..Default::default() };
        let paths = iterate(Q, &g, &session, &config);
        assert_eq!(paths[0].iterations(), config.t_max);
        assert!(paths[0].answer.is_none());
        assert_eq!(path_score(&paths[0], &g, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ungrounded_answers_are_rejected_and_failures_isolated() {
        let g = loop_graph();
        let mut script = MockScript { strict: true, ..Default::default() };
        script.push(Q, RequestKind::Hypothesis, 0, None, json!({"text": "Probably the Lethe.", "proposed_answer": "Lethe", "confidence": 0.95}));
        script.push(Q, RequestKind::Hypothesis, 1, None, json!({"text": "Velmora sits on the Astra River.", "proposed_answer": "Astra River", "confidence": 0.8}));
        let mock = MockAdapter::new(script);
        let session = Session::new(&mock, "t", 0);
        let mut paths = iterate(Q, &g, &session, &LoopConfig::default());
        assert!(paths[2].failure.is_some() && paths[2].answer.is_none());
        let verdicts = ground_paths(&mut paths, &g);
        assert_eq!(verdicts, [(0, "lethe".to_string(), false), (1, "astra river".to_string(), true)]);
        assert!(paths[0].answer.is_none());
    }
}
