//! Semantic encoding, triple relevance scoring and subgraph selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgError, KnowledgeGraph, RelationId, Triple};
use crate::reasoner::QuestionSchema;
use crate::text::{fnv1a, tokens};

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RelevanceError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error(transparent)]
    Graph(#[from] KgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn from_components(components: Vec<f64>) -> Self {
        assert!(components.iter().all(|c| c.is_finite()), "embedding components must be finite");
        Self(components)
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;
    fn neg(self) -> EmbeddingVector {
        EmbeddingVector(self.0.iter().map(|c| -c).collect())
    }
}

/// Text encoder behind relevance scoring. Implementations must be
/// deterministic.
pub trait Encoder: Send + Sync {
    fn encode(&self, text: &str) -> EmbeddingVector;
}

/// Signed hashed bag of normalized tokens, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashedBagEncoder {
    pub dimension: usize,
}

impl Default for HashedBagEncoder {
    fn default() -> Self {
        Self { dimension: DEFAULT_DIMENSION }
    }
}

impl HashedBagEncoder {
    /// Bucket and sign a token contributes to.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let hash = fnv1a(token.as_bytes());
        let bucket = ((hash >> 1) % self.dimension as u64) as usize;
        let sign = if hash & 1 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }
}

impl Encoder for HashedBagEncoder {
    fn encode(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dimension];
        for token in tokens(text) {
            let (bucket, sign) = self.slot(&token);
            v[bucket] += sign;
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|c| *c /= norm);
        }
        EmbeddingVector(v)
    }
}

pub fn encode(text: &str) -> EmbeddingVector {
    HashedBagEncoder::default().encode(text)
}

/// Cosine similarity clamped to `[-1, 1]`; zero if either side is zero.
pub fn similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RelevanceError> {
    if u.dimension() != v.dimension() {
        return Err(RelevanceError::DimensionMismatch { left: u.dimension(), right: v.dimension() });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Scores triples against one question, encoding the question once.
pub struct Scorer<'a, E: Encoder = HashedBagEncoder> {
    graph: &'a KnowledgeGraph,
    encoder: E,
    question: EmbeddingVector,
}

impl<'a> Scorer<'a, HashedBagEncoder> {
    pub fn new(graph: &'a KnowledgeGraph, question: &str) -> Self {
        Self::with_encoder(graph, question, HashedBagEncoder::default())
    }
}

impl<'a, E: Encoder> Scorer<'a, E> {
    pub fn with_encoder(graph: &'a KnowledgeGraph, question: &str, encoder: E) -> Self {
        let question = encoder.encode(question);
        Self { graph, encoder, question }
    }

    pub fn score(&self, triple: &Triple) -> Result<f64, RelevanceError> {
        let text = self.graph.verbalize(triple)?;
        similarity(&self.encoder.encode(&text), &self.question)
    }
}

/// Relevance of one triple to a question.
pub fn score_triple(triple: &Triple, question: &str, graph: &KnowledgeGraph) -> Result<f64, RelevanceError> {
    Scorer::new(graph, question).score(triple)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SelectionPolicy {
    /// Keep every candidate scoring at least `tau`.
    Threshold { tau: f64 },
    /// Keep the `k` best candidates, ties broken by triple id order.
    TopK { k: usize },
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy::TopK { k: 32 }
    }
}

/// Query-relevant triples with their derived entity and relation sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Subgraph {
    triples: BTreeSet<Triple>,
    entities: BTreeSet<EntityId>,
    relations: BTreeSet<RelationId>,
    scores: BTreeMap<Triple, f64>,
}

impl Subgraph {
    pub fn from_scored(scored: impl IntoIterator<Item = (Triple, f64)>) -> Self {
        let mut sub = Subgraph::default();
        for (triple, score) in scored {
            sub.triples.insert(triple);
            sub.entities.insert(triple.head);
            sub.entities.insert(triple.tail);
            sub.relations.insert(triple.relation);
            sub.scores.insert(triple, score);
        }
        sub
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn entities(&self) -> &BTreeSet<EntityId> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeSet<RelationId> {
        &self.relations
    }

    pub fn scores(&self) -> &BTreeMap<Triple, f64> {
        &self.scores
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Applies a selection policy to scored candidates.
pub fn apply_policy(mut scored: Vec<(Triple, f64)>, policy: SelectionPolicy) -> Vec<(Triple, f64)> {
    match policy {
        SelectionPolicy::Threshold { tau } => {
            scored.retain(|(_, s)| *s >= tau);
            scored
        }
        SelectionPolicy::TopK { k } => {
            scored.sort_by(|(ta, sa), (tb, sb)| sb.total_cmp(sa).then(ta.cmp(tb)));
            scored.truncate(k);
            scored
        }
    }
}

/// Seeds for candidate retrieval: the schema's grounded entities that resolve
/// in the graph, or the entities linked in the question when there are none.
pub fn seed_entities(graph: &KnowledgeGraph, schema: &QuestionSchema, question: &str) -> Vec<EntityId> {
    let mut seeds: BTreeSet<EntityId> = schema.entities.iter().filter_map(|n| graph.resolve_entity(n)).collect();
    if seeds.is_empty() {
        seeds.extend(graph.link_entities(question));
    }
    seeds.into_iter().collect()
}

/// The k-hop candidate pool around the seeds, each scored against the question.
pub fn scored_candidates(
    graph: &KnowledgeGraph,
    seeds: &[EntityId],
    question: &str,
    hops: usize,
) -> Result<Vec<(Triple, f64)>, RelevanceError> {
    let scorer = Scorer::new(graph, question);
    graph
        .neighborhood(seeds, hops)?
        .into_iter()
        .map(|t| scorer.score(&t).map(|s| (t, s)))
        .collect()
}

/// Candidate pool from the schema's entities, filtered by `policy`.
pub fn select_subgraph(
    graph: &KnowledgeGraph,
    schema: &QuestionSchema,
    question: &str,
    policy: SelectionPolicy,
    hops: usize,
) -> Result<Subgraph, RelevanceError> {
    let seeds = seed_entities(graph, schema, question);
    let candidates = scored_candidates(graph, &seeds, question, hops)?;
    Ok(Subgraph::from_scored(apply_policy(candidates, policy)))
}
