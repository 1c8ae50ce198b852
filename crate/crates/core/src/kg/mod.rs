//! In-memory knowledge graph: interning, adjacency indexes, entity linking and
//! k-hop neighborhood expansion.

mod graph;
mod link;

pub use graph::{
    Entity, EntityId, GraphBuilder, KgError, KnowledgeGraph, Relation, RelationId, Triple,
};
