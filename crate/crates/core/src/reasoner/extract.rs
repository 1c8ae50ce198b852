use super::schema::{ConstraintKind, QuestionSchema, SchemaNode, SchemaTriple};
use super::ReasonerError;
use crate::adapter::{RequestPayload, ResponseBody, Session};
use crate::kg::KnowledgeGraph;
use crate::relevance::{apply_policy, scored_candidates, SelectionPolicy};

/// Exemplar triples shown to the model alongside the question.
pub const EXEMPLAR_COUNT: usize = 8;

/// Result of parsing a schema reply, before grounding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedReply {
    pub schema: QuestionSchema,
    pub warnings: Vec<String>,
}

fn parse_line(line: &str, schema: &mut QuestionSchema, warnings: &mut Vec<String>) {
    let line = line.trim();
    if line.is_empty() {
        return;
    }
    let lower = line.to_ascii_lowercase();
    if lower.starts_with("answer:") {
        let var = line["answer:".len()..].trim().trim_start_matches('?').trim();
        if var.is_empty() {
            warnings.push(format!("empty answer line {line:?}"));
        } else {
            schema.answer_variable = var.to_string();
        }
        return;
    }
    if lower.starts_with("constraint:") {
        let rest = line["constraint:".len()..].trim();
        let mut parts = rest.splitn(3, char::is_whitespace);
        let kind = match parts.next().map(str::to_ascii_lowercase).as_deref() {
            Some("equality") => ConstraintKind::Equality,
            Some("type-hint") | Some("type_hint") | Some("type") => ConstraintKind::TypeHint,
            _ => {
                warnings.push(format!("unknown constraint {line:?}"));
                return;
            }
        };
        match (parts.next(), parts.next()) {
            (Some(subject), Some(value)) if subject.starts_with('?') && !value.trim().is_empty() => {
                *schema = std::mem::take(schema).with_constraint(kind, subject, value.trim());
            }
            _ => warnings.push(format!("malformed constraint {line:?}")),
        }
        return;
    }
    let parts: Vec<&str> = line.split('|').collect();
    if parts.len() != 3 {
        warnings.push(format!("ignored line {line:?}"));
        return;
    }
    match (SchemaNode::parse(parts[0]), SchemaNode::parse(parts[2])) {
        (Some(subject), Some(object)) if !parts[1].trim().is_empty() => {
            schema.triples.push(SchemaTriple::new(subject, parts[1], object));
        }
        _ => warnings.push(format!("ignored line {line:?}")),
    }
}

/// Parses the fenced line-oriented schema format. Without a fence every line
/// of the reply is scanned and a warning is recorded.
pub fn parse_schema_reply(text: &str) -> ParsedReply {
    let mut out = ParsedReply::default();
    let lines: Vec<&str> = text.lines().collect();
    let open = lines.iter().position(|l| l.trim_start().starts_with("```"));
    let body: Vec<&str> = match open {
        Some(start) => {
            let end = lines[start + 1..]
                .iter()
                .position(|l| l.trim_start().starts_with("```"))
                .map_or(lines.len(), |p| start + 1 + p);
            lines[start + 1..end].to_vec()
        }
        None => {
            if !text.trim().is_empty() {
                out.warnings.push("reply has no fenced schema block; scanned free text".into());
            }
            lines
        }
    };
    for line in body {
        parse_line(line, &mut out.schema, &mut out.warnings);
    }
    if out.schema.answer_variable.is_empty() {
        if let [only] = out.schema.variables().as_slice() {
            out.schema.answer_variable = only.clone();
        }
    }
    out.schema.refresh_sets();
    out
}

/// Resolves grounded names through the alias table. Names that do not
/// resolve become fresh variables.
pub fn ground_schema(schema: &QuestionSchema, graph: &KnowledgeGraph, warnings: &mut Vec<String>) -> QuestionSchema {
    let ground = |node: &SchemaNode, warnings: &mut Vec<String>| match node {
        SchemaNode::Variable(_) => node.clone(),
        SchemaNode::Entity(name) => match graph.resolve_entity(name) {
            Some(id) => SchemaNode::Entity(graph.entity(id).expect("resolved").canonical_name.clone()),
            None => {
                warnings.push(format!("entity {name:?} not in graph; treated as a variable"));
                let var: String = name.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect();
                SchemaNode::Variable(format!("u_{var}"))
            }
        },
    };
    let triples = schema
        .triples
        .iter()
        .map(|t| SchemaTriple {
            subject: ground(&t.subject, warnings),
            relation: t.relation.clone(),
            object: ground(&t.object, warnings),
        })
        .collect();
    let mut grounded = QuestionSchema::from_triples(triples, &schema.answer_variable);
    grounded.constraints = schema.constraints.clone();
    grounded
}

/// Triples offered to the model as context: the best-scoring one-hop
/// neighbours of the entities linked in the question.
pub fn exemplar_triples(graph: &KnowledgeGraph, question: &str) -> Vec<String> {
    let seeds = graph.link_entities(question);
    let scored = scored_candidates(graph, &seeds, question, 1).unwrap_or_default();
    let mut chosen = apply_policy(scored, SelectionPolicy::TopK { k: EXEMPLAR_COUNT });
    chosen.sort_by_key(|(t, _)| *t);
    chosen
        .iter()
        .filter_map(|(t, _)| graph.names(t).ok())
        .map(|(h, r, t)| format!("{h}|{r}|{t}"))
        .collect()
}

/// Asks the model for a schema and grounds it against the graph. A reply
/// without any schema triple is an extraction failure.
pub fn extract_schema(
    question: &str,
    graph: &KnowledgeGraph,
    session: &Session<'_>,
) -> Result<(QuestionSchema, Vec<String>), ReasonerError> {
    let payload = RequestPayload::SchemaExtraction { exemplar_triples: exemplar_triples(graph, question) };
    let ResponseBody::SchemaExtraction { text } = session.call(question, 0, payload)? else {
        unreachable!("session checks reply kind");
    };
    let ParsedReply { schema, mut warnings } = parse_schema_reply(&text);
    if schema.triples.is_empty() {
        return Err(ReasonerError::SchemaExtraction("reply contains no schema triples".into()));
    }
    let grounded = ground_schema(&schema, graph, &mut warnings);
    for w in &warnings {
        log::warn!("schema extraction: {w}");
    }
    Ok((grounded, warnings))
}
