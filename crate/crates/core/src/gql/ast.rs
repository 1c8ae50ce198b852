use std::collections::HashMap;
use std::fmt;

use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePattern {
    pub variable: String,
    /// Exact entity name the node must resolve to.
    pub bound_name: Option<String>,
}

impl NodePattern {
    pub fn var(variable: impl Into<String>) -> Self {
        Self { variable: variable.into(), bound_name: None }
    }

    pub fn named(variable: impl Into<String>, name: impl Into<String>) -> Self {
        Self { variable: variable.into(), bound_name: Some(name.into()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(source) -[rel]-> (target)`: the stored triple is `(source, rel, target)`.
    Forward,
    /// `(source) <-[rel]- (target)`: the stored triple is `(target, rel, source)`.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub source: NodePattern,
    pub relation: String,
    pub direction: Direction,
    pub target: NodePattern,
}

impl PathStep {
    /// Variables in stored-triple order: `(head, tail)`.
    pub fn head_tail(&self) -> (&NodePattern, &NodePattern) {
        match self.direction {
            Direction::Forward => (&self.source, &self.target),
            Direction::Backward => (&self.target, &self.source),
        }
    }
}

/// A validated linear chain pattern with its returned variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pattern: Vec<PathStep>,
    returns: Vec<String>,
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl QueryAst {
    pub fn new(pattern: Vec<PathStep>, returns: Vec<String>) -> Result<Self, QueryError> {
        if pattern.is_empty() {
            return Err(QueryError::EmptyPattern { position: 0 });
        }
        let mut names: HashMap<&str, Option<&str>> = HashMap::new();
        for (i, step) in pattern.iter().enumerate() {
            if !is_ident(&step.relation) {
                return Err(QueryError::InvalidIdentifier { name: step.relation.clone() });
            }
            if i > 0 && pattern[i - 1].target != step.source {
                return Err(QueryError::BrokenChain { step: i });
            }
            for node in [&step.source, &step.target] {
                if !is_ident(&node.variable) {
                    return Err(QueryError::InvalidIdentifier { name: node.variable.clone() });
                }
                let bound = node.bound_name.as_deref();
                match names.get(node.variable.as_str()) {
                    Some(&previous) if previous != bound => {
                        return Err(QueryError::ConflictingBinding {
                            variable: node.variable.clone(),
                            position: 0,
                        })
                    }
                    _ => {
                        names.insert(&node.variable, bound);
                    }
                }
            }
        }
        if returns.len() != 1 {
            return Err(QueryError::ReturnArity { found: returns.len() });
        }
        for var in &returns {
            if !names.contains_key(var.as_str()) {
                return Err(QueryError::UnboundVariable { variable: var.clone(), position: 0 });
            }
        }
        Ok(Self { pattern, returns })
    }

    pub fn pattern(&self) -> &[PathStep] {
        &self.pattern
    }

    pub fn returns(&self) -> &[String] {
        &self.returns
    }

    /// The single returned variable.
    pub fn answer_variable(&self) -> &str {
        &self.returns[0]
    }

    /// Node sequence of the chain: the first source followed by every target.
    pub fn nodes(&self) -> impl Iterator<Item = &NodePattern> {
        std::iter::once(&self.pattern[0].source).chain(self.pattern.iter().map(|s| &s.target))
    }

    /// Distinct variables in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for node in self.nodes() {
            if !seen.contains(&node.variable) {
                seen.push(node.variable.clone());
            }
        }
        seen
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &NodePattern) -> fmt::Result {
    match &node.bound_name {
        Some(name) => {
            let escaped = name.replace('\\', "\\\\").replace('"', "\\\"");
            write!(f, "({} {{name: \"{}\"}})", node.variable, escaped)
        }
        None => write!(f, "({})", node.variable),
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MATCH ")?;
        write_node(f, &self.pattern[0].source)?;
        for step in &self.pattern {
            match step.direction {
                Direction::Forward => write!(f, " -[{}]-> ", step.relation)?,
                Direction::Backward => write!(f, " <-[{}]- ", step.relation)?,
            }
            write_node(f, &step.target)?;
        }
        write!(f, " RETURN {}", self.returns.join(", "))
    }
}
