use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::normalize;

/// A schema slot: either an unknown (`?x`) or a grounded entity name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemaNode {
    Variable(String),
    Entity(String),
}

impl SchemaNode {
    /// `?name` is a variable; anything else is an entity name.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some(var) = text.strip_prefix('?') {
            let var = var.trim();
            (!var.is_empty()).then(|| SchemaNode::Variable(var.to_string()))
        } else {
            let name = normalize(text);
            (!name.is_empty()).then_some(SchemaNode::Entity(name))
        }
    }

    pub fn variable(&self) -> Option<&str> {
        match self {
            SchemaNode::Variable(v) => Some(v),
            SchemaNode::Entity(_) => None,
        }
    }

    pub fn entity(&self) -> Option<&str> {
        match self {
            SchemaNode::Entity(e) => Some(e),
            SchemaNode::Variable(_) => None,
        }
    }
}

impl fmt::Display for SchemaNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaNode::Variable(v) => write!(f, "?{v}"),
            SchemaNode::Entity(e) => f.write_str(e),
        }
    }
}

impl From<SchemaNode> for String {
    fn from(node: SchemaNode) -> String {
        node.to_string()
    }
}

impl TryFrom<String> for SchemaNode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        SchemaNode::parse(&s).ok_or_else(|| format!("invalid schema node {s:?}"))
    }
}

/// One `(node, relation, node)` constraint, in stored-triple direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaTriple {
    pub subject: SchemaNode,
    pub relation: String,
    pub object: SchemaNode,
}

impl SchemaTriple {
    pub fn new(subject: SchemaNode, relation: &str, object: SchemaNode) -> Self {
        Self { subject, relation: normalize(relation), object }
    }
}

impl fmt::Display for SchemaTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// The variable must resolve to the named entity.
    Equality,
    /// Informational; recorded but not enforced.
    TypeHint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub subject: String,
    pub value: String,
}

/// Structured skeleton of a question: grounded entities, relations,
/// constraints and an ordered chain of schema triples ending in an answer slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSchema {
    pub entities: BTreeSet<String>,
    pub relations: BTreeSet<String>,
    pub constraints: Vec<Constraint>,
    pub triples: Vec<SchemaTriple>,
    pub answer_variable: String,
}

impl QuestionSchema {
    /// Builds a schema from its chain, deriving the entity and relation sets.
    pub fn from_triples(triples: Vec<SchemaTriple>, answer_variable: &str) -> Self {
        let mut schema = QuestionSchema {
            triples,
            answer_variable: answer_variable.trim_start_matches('?').to_string(),
            ..Default::default()
        };
        schema.refresh_sets();
        schema
    }

    /// Entity-only schema used when no chain is available.
    pub fn entity_only(entities: impl IntoIterator<Item = String>) -> Self {
        QuestionSchema { entities: entities.into_iter().collect(), ..Default::default() }
    }

    pub fn with_constraint(mut self, kind: ConstraintKind, subject: &str, value: &str) -> Self {
        self.constraints.push(Constraint {
            kind,
            subject: subject.trim_start_matches('?').to_string(),
            value: value.to_string(),
        });
        self
    }

    pub(crate) fn refresh_sets(&mut self) {
        for t in &self.triples {
            for node in [&t.subject, &t.object] {
                if let SchemaNode::Entity(name) = node {
                    self.entities.insert(name.clone());
                }
            }
            self.relations.insert(t.relation.clone());
        }
    }

    /// A schema with at least one triple whose answer variable occurs in it.
    pub fn is_usable(&self) -> bool {
        !self.triples.is_empty() && self.mentions_variable(&self.answer_variable)
    }

    pub fn mentions_variable(&self, variable: &str) -> bool {
        self.triples
            .iter()
            .any(|t| t.subject.variable() == Some(variable) || t.object.variable() == Some(variable))
    }

    /// Variables in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.triples {
            for node in [&t.subject, &t.object] {
                if let Some(v) = node.variable() {
                    if !out.iter().any(|o| o == v) {
                        out.push(v.to_string());
                    }
                }
            }
        }
        out
    }

    /// Line-oriented rendering matching the reply format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        for c in &self.constraints {
            let kind = match c.kind {
                ConstraintKind::Equality => "equality",
                ConstraintKind::TypeHint => "type-hint",
            };
            out.push_str(&format!("constraint: {kind} ?{} {}\n", c.subject, c.value));
        }
        if !self.answer_variable.is_empty() {
            out.push_str(&format!("answer: ?{}\n", self.answer_variable));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_parsing() {
        assert_eq!(SchemaNode::parse(" ?x "), Some(SchemaNode::Variable("x".into())));
        assert_eq!(SchemaNode::parse("France"), Some(SchemaNode::Entity("france".into())));
        assert_eq!(SchemaNode::parse("?"), None);
        assert_eq!(SchemaNode::parse("  "), None);
    }

    #[test]
    fn derived_sets_and_usability() {
        let s = QuestionSchema::from_triples(
            vec![SchemaTriple::new(SchemaNode::Variable("x".into()), "Capital_Of", SchemaNode::Entity("france".into()))],
            "?x",
        );
        assert!(s.is_usable());
        assert_eq!(s.entities, BTreeSet::from(["france".to_string()]));
        assert_eq!(s.relations, BTreeSet::from(["capital_of".to_string()]));
        assert_eq!(s.render(), "?x|capital_of|france\nanswer: ?x\n");
        assert!(!QuestionSchema::entity_only(["france".to_string()]).is_usable());
        let mut wrong_answer = s.clone();
        wrong_answer.answer_variable = "y".into();
        assert!(!wrong_answer.is_usable());
    }

    #[test]
    fn serde_uses_text_nodes() {
        let t = SchemaTriple::new(SchemaNode::Variable("x".into()), "r", SchemaNode::Entity("paris".into()));
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"subject":"?x","relation":"r","object":"paris"}"#);
        assert_eq!(serde_json::from_str::<SchemaTriple>(&json).unwrap(), t);
    }
}
