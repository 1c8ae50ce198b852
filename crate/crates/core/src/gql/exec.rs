use std::collections::BTreeSet;

use serde::Serialize;

use super::ast::QueryAst;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

/// One satisfying assignment, in the query's variable order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct BindingRow {
    pub bindings: Vec<(String, EntityId)>,
}

impl BindingRow {
    pub fn get(&self, variable: &str) -> Option<EntityId> {
        self.bindings.iter().find(|(v, _)| v == variable).map(|(_, id)| *id)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult {
    pub variables: Vec<String>,
    pub rows: Vec<BindingRow>,
    /// Non-fatal conditions such as unknown relation or entity names.
    pub warnings: Vec<String>,
}

impl QueryResult {
    /// Distinct entities bound to `variable`, in row order.
    pub fn column(&self, variable: &str) -> Vec<EntityId> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .filter_map(|row| row.get(variable))
            .filter(|id| seen.insert(*id))
            .collect()
    }
}

struct CompiledStep {
    head: usize,
    relation: RelationId,
    tail: usize,
}

/// Runs a chain query by backtracking over the adjacency indexes. Rows are
/// sorted by the tuple of bound ids in variable order.
pub fn execute(ast: &QueryAst, graph: &KnowledgeGraph) -> QueryResult {
    let variables = ast.variables();
    let mut result = QueryResult { variables: variables.clone(), ..Default::default() };
    let slot = |name: &str| variables.iter().position(|v| v == name).unwrap_or(0);

    let mut fixed: Vec<Option<EntityId>> = vec![None; variables.len()];
    for node in ast.nodes() {
        if let Some(name) = &node.bound_name {
            match graph.resolve_entity(name) {
                Some(id) => fixed[slot(&node.variable)] = Some(id),
                None => {
                    result.warnings.push(format!("entity {name:?} not found in graph"));
                    return result;
                }
            }
        }
    }

    let mut steps = Vec::with_capacity(ast.pattern().len());
    for step in ast.pattern() {
        let Some(relation) = graph.resolve_relation(&step.relation) else {
            result.warnings.push(format!("relation {:?} not found in graph", step.relation));
            return result;
        };
        let (head, tail) = step.head_tail();
        steps.push(CompiledStep { head: slot(&head.variable), relation, tail: slot(&tail.variable) });
    }

    let order = plan(&steps, &fixed, graph);
    let mut rows = BTreeSet::new();
    let mut assignment = fixed.clone();
    search(&order, &steps, graph, &mut assignment, &mut rows);

    result.rows = rows
        .into_iter()
        .map(|ids: Vec<EntityId>| BindingRow {
            bindings: variables.iter().cloned().zip(ids).collect(),
        })
        .collect();
    result
}

/// Greedy selectivity order: steps touching already-bound variables first,
/// otherwise the step with the smallest relation bucket.
fn plan(steps: &[CompiledStep], fixed: &[Option<EntityId>], graph: &KnowledgeGraph) -> Vec<usize> {
    let mut bound: Vec<bool> = fixed.iter().map(Option::is_some).collect();
    let mut remaining: Vec<usize> = (0..steps.len()).collect();
    let mut order = Vec::with_capacity(steps.len());
    while !remaining.is_empty() {
        let cost = |&i: &usize| {
            let s = &steps[i];
            match (bound[s.head], bound[s.tail]) {
                (true, true) => (0, 0),
                (true, false) | (false, true) => (1, graph.relation_count(s.relation)),
                (false, false) => (2, graph.relation_count(s.relation)),
            }
        };
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .min_by_key(|(_, i)| (cost(i), **i))
            .expect("non-empty");
        let next = remaining.remove(pos);
        bound[steps[next].head] = true;
        bound[steps[next].tail] = true;
        order.push(next);
    }
    order
}

fn search(
    order: &[usize],
    steps: &[CompiledStep],
    graph: &KnowledgeGraph,
    assignment: &mut Vec<Option<EntityId>>,
    rows: &mut BTreeSet<Vec<EntityId>>,
) {
    let Some((&next, rest)) = order.split_first() else {
        rows.insert(assignment.iter().map(|a| a.expect("every variable is bound by some step")).collect());
        return;
    };
    let step = &steps[next];
    let (head, tail) = (assignment[step.head], assignment[step.tail]);
    let candidates: Vec<Triple> = match (head, tail) {
        (Some(h), _) => graph.outgoing(h).filter(|t| t.relation == step.relation).copied().collect(),
        (None, Some(t)) => graph.incoming(t).filter(|tr| tr.relation == step.relation).copied().collect(),
        (None, None) => graph.with_relation(step.relation).copied().collect(),
    };
    for triple in candidates {
        if tail.is_some_and(|t| t != triple.tail) {
            continue;
        }
        if step.head == step.tail && triple.head != triple.tail {
            continue;
        }
        let set_head = assignment[step.head].is_none();
        assignment[step.head] = Some(triple.head);
        let set_tail = assignment[step.tail].is_none();
        assignment[step.tail] = Some(triple.tail);
        search(rest, steps, graph, assignment, rows);
        if set_head {
            assignment[step.head] = None;
        }
        if set_tail {
            assignment[step.tail] = None;
        }
    }
}
