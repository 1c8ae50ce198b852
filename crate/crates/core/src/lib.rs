//! Stepwise reasoning over a knowledge graph: schema extraction, relevance
//! pruning, query validation and a collaborative fallback, driven by a
//! pluggable language model.

pub mod adapter;
pub mod collab;
pub mod direct;
pub mod gql;
pub mod harness;
pub mod kg;
pub mod reasoner;
pub mod relevance;
pub mod text;
