use std::collections::HashMap;

use thiserror::Error;

use super::ast::{is_ident, Direction, NodePattern, PathStep, QueryAst};
use super::QueryError;
use crate::reasoner::{ConstraintKind, QuestionSchema, SchemaNode};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("schema has no triples")]
    ZeroTriples,
    #[error("answer variable `?{0}` does not occur in the schema triples")]
    NoAnswerVariable(String),
    #[error("schema triple {index} does not connect to the previous one")]
    NotAChain { index: usize },
    #[error("variable `?{variable}` has conflicting equality constraints")]
    ConflictingConstraints { variable: String },
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Orders the schema's nodes along the chain: triple `i` joins `nodes[i]` and
/// `nodes[i + 1]`. The chain is reversed when that puts the answer last.
fn chain_nodes(schema: &QuestionSchema) -> Result<(Vec<SchemaNode>, bool), CompileError> {
    let triples = &schema.triples;
    let first = &triples[0];
    let mut nodes = if let Some(second) = triples.get(1) {
        let touches = |n: &SchemaNode| second.subject == *n || second.object == *n;
        if touches(&first.object) {
            vec![first.subject.clone(), first.object.clone()]
        } else if touches(&first.subject) {
            vec![first.object.clone(), first.subject.clone()]
        } else {
            return Err(CompileError::NotAChain { index: 1 });
        }
    } else {
        vec![first.subject.clone(), first.object.clone()]
    };
    for (index, triple) in triples.iter().enumerate().skip(1) {
        let current = nodes.last().expect("non-empty");
        let next = if triple.subject == *current {
            triple.object.clone()
        } else if triple.object == *current {
            triple.subject.clone()
        } else {
            return Err(CompileError::NotAChain { index });
        };
        nodes.push(next);
    }
    let answer = SchemaNode::Variable(schema.answer_variable.clone());
    let reversed = nodes.last() != Some(&answer) && nodes.first() == Some(&answer);
    if reversed {
        nodes.reverse();
    }
    Ok((nodes, reversed))
}

fn sanitize(variable: &str) -> String {
    let mut out: String = variable
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if !is_ident(&out) {
        out.insert(0, 'v');
    }
    out
}

/// Deterministically compiles a schema chain into a query whose single
/// returned variable is the schema's answer slot. Grounded nodes and
/// equality-constrained variables become `{name: ...}` patterns.
pub fn compile_schema(schema: &QuestionSchema) -> Result<QueryAst, CompileError> {
    if schema.triples.is_empty() {
        return Err(CompileError::ZeroTriples);
    }
    if !schema.mentions_variable(&schema.answer_variable) {
        return Err(CompileError::NoAnswerVariable(schema.answer_variable.clone()));
    }
    let (nodes, reversed) = chain_nodes(schema)?;
    let mut ordered: Vec<_> = schema.triples.iter().collect();
    if reversed {
        ordered.reverse();
    }

    let mut equalities: HashMap<&str, &str> = HashMap::new();
    for c in schema.constraints.iter().filter(|c| c.kind == ConstraintKind::Equality) {
        if !schema.mentions_variable(&c.subject) {
            continue;
        }
        match equalities.insert(&c.subject, &c.value) {
            Some(previous) if previous != c.value => {
                return Err(CompileError::ConflictingConstraints { variable: c.subject.clone() })
            }
            _ => {}
        }
    }

    let mut names: HashMap<SchemaNode, NodePattern> = HashMap::new();
    let mut taken: Vec<String> = schema.variables().iter().map(|v| sanitize(v)).collect();
    let mut grounded = 0;
    for node in &nodes {
        if names.contains_key(node) {
            continue;
        }
        let pattern = match node {
            SchemaNode::Variable(v) => NodePattern {
                variable: sanitize(v),
                bound_name: equalities.get(v.as_str()).map(|s| s.to_string()),
            },
            SchemaNode::Entity(name) => {
                let mut var = format!("g{grounded}");
                while taken.contains(&var) {
                    grounded += 1;
                    var = format!("g{grounded}");
                }
                grounded += 1;
                taken.push(var.clone());
                NodePattern::named(var, name.clone())
            }
        };
        names.insert(node.clone(), pattern);
    }

    let steps = ordered
        .into_iter()
        .zip(nodes.windows(2))
        .map(|(triple, pair)| {
            let direction = if triple.subject == pair[0] && triple.object == pair[1] {
                Direction::Forward
            } else {
                Direction::Backward
            };
            PathStep {
                source: names[&pair[0]].clone(),
                relation: triple.relation.clone(),
                direction,
                target: names[&pair[1]].clone(),
            }
        })
        .collect();
    Ok(QueryAst::new(steps, vec![sanitize(&schema.answer_variable)])?)
}
