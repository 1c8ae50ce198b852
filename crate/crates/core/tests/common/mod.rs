#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use sgr::gql::{Direction, NodePattern, PathStep, QueryAst};
use sgr::kg::{EntityId, KnowledgeGraph, Triple};
use sgr::reasoner::{ConstraintKind, QuestionSchema, SchemaNode, SchemaTriple};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Named edge list over entities `e0..` and relations `r0..`.
#[derive(Debug, Clone)]
pub struct Edges {
    pub edges: Vec<(String, String, String)>,
}

impl Edges {
    pub fn random(rng: &mut impl Rng, max_triples: usize, entities: usize, relations: usize) -> Self {
        let n = rng.gen_range(0..=max_triples);
        let edges = (0..n)
            .map(|_| {
                (
                    format!("e{}", rng.gen_range(0..entities)),
                    format!("r{}", rng.gen_range(0..relations)),
                    format!("e{}", rng.gen_range(0..entities)),
                )
            })
            .collect();
        Edges { edges }
    }

    pub fn tsv(&self) -> String {
        self.edges.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect()
    }

    pub fn graph(&self) -> KnowledgeGraph {
        KnowledgeGraph::load_triples(self.tsv().as_bytes()).expect("generated graph loads")
    }

    pub fn distinct(&self) -> BTreeSet<(String, String, String)> {
        self.edges.iter().cloned().collect()
    }
}

/// Breadth-first reference over the explicit edge list, by name.
pub fn bfs_oracle(edges: &BTreeSet<(String, String, String)>, seeds: &[String], hops: usize) -> BTreeSet<(String, String, String)> {
    let mut depth: BTreeMap<String, usize> = seeds.iter().map(|s| (s.clone(), 0)).collect();
    let mut queue: VecDeque<String> = seeds.iter().cloned().collect();
    while let Some(node) = queue.pop_front() {
        let d = depth[&node];
        if d == hops {
            continue;
        }
        for (h, _, t) in edges {
            for (a, b) in [(h, t), (t, h)] {
                if *a == node && !depth.contains_key(b) {
                    depth.insert(b.clone(), d + 1);
                    queue.push_back(b.clone());
                }
            }
        }
    }
    // an edge is within reach when one endpoint is at depth < hops
    edges
        .iter()
        .filter(|(h, _, t)| [h, t].iter().any(|n| depth.get(*n).is_some_and(|&d| d < hops)))
        .cloned()
        .collect()
}

pub fn named(graph: &KnowledgeGraph, triples: &[Triple]) -> BTreeSet<(String, String, String)> {
    triples
        .iter()
        .map(|t| {
            let (h, r, tl) = graph.names(t).unwrap();
            (h.to_string(), r.to_string(), tl.to_string())
        })
        .collect()
}

const VARS: [&str; 4] = ["a", "b", "c", "d"];

/// A chain query of 1..=3 steps over variables drawn (with repeats) from
/// four names. About a third of the variables carry a bound name, which is
/// sometimes absent from the graph.
pub fn random_query(rng: &mut impl Rng, entities: usize, relations: usize) -> QueryAst {
    let steps = rng.gen_range(1..=3);
    let mut bound: BTreeMap<&str, Option<String>> = BTreeMap::new();
    for v in VARS {
        let name = if rng.gen_bool(0.3) {
            Some(if rng.gen_bool(0.1) { "atlantis".to_string() } else { format!("e{}", rng.gen_range(0..entities)) })
        } else {
            None
        };
        bound.insert(v, name);
    }
    let node = |v: &str| NodePattern { variable: v.to_string(), bound_name: bound[v].clone() };
    let chain: Vec<&str> = (0..=steps).map(|_| *VARS.choose(rng).unwrap()).collect();
    let pattern: Vec<PathStep> = chain
        .windows(2)
        .map(|w| PathStep {
            source: node(w[0]),
            relation: format!("r{}", rng.gen_range(0..relations + 1)),
            direction: if rng.gen_bool(0.5) { Direction::Forward } else { Direction::Backward },
            target: node(w[1]),
        })
        .collect();
    let ret = chain.choose(rng).unwrap().to_string();
    QueryAst::new(pattern, vec![ret]).expect("generated query is well formed")
}

/// Every satisfying assignment found by enumerating all entity tuples.
pub fn exhaustive_rows(ast: &QueryAst, graph: &KnowledgeGraph) -> BTreeSet<Vec<(String, EntityId)>> {
    let vars = ast.variables();
    let n = graph.entities().len();
    let facts: BTreeSet<(String, String, String)> = graph.named_triples();
    let mut out = BTreeSet::new();
    if n == 0 {
        return out;
    }
    let mut assignment = vec![0usize; vars.len()];
    loop {
        let value = |name: &str| assignment[vars.iter().position(|v| v == name).unwrap()];
        let ok = ast.nodes().all(|node| match &node.bound_name {
            Some(name) => graph.resolve_entity(name) == Some(EntityId(value(&node.variable) as u32)),
            None => true,
        }) && ast.pattern().iter().all(|step| {
            let (h, t) = step.head_tail();
            let hn = graph.label(EntityId(value(&h.variable) as u32)).to_string();
            let tn = graph.label(EntityId(value(&t.variable) as u32)).to_string();
            facts.contains(&(hn, step.relation.clone(), tn))
        });
        if ok {
            out.insert(vars.iter().cloned().zip(assignment.iter().map(|&i| EntityId(i as u32))).collect());
        }
        let mut i = 0;
        loop {
            if i == assignment.len() {
                return out;
            }
            assignment[i] += 1;
            if assignment[i] < n {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}

/// A schema chain of 1..=3 triples over distinct nodes, some grounded to
/// graph entities, with an optional equality constraint.
pub fn random_schema(rng: &mut impl Rng, entities: usize, relations: usize) -> QuestionSchema {
    let len = rng.gen_range(1..=3);
    let vars = ["x", "y", "z", "w"];
    let mut used = BTreeSet::new();
    let mut nodes: Vec<SchemaNode> = Vec::new();
    for i in 0..=len {
        if rng.gen_bool(0.35) {
            let name = if rng.gen_bool(0.1) { "atlantis".to_string() } else { format!("e{}", rng.gen_range(0..entities)) };
            if used.insert(name.clone()) {
                nodes.push(SchemaNode::Entity(name));
                continue;
            }
        }
        nodes.push(SchemaNode::Variable(vars[i].to_string()));
    }
    let variables: Vec<String> = nodes.iter().filter_map(|n| n.variable().map(str::to_string)).collect();
    if variables.is_empty() {
        nodes[len] = SchemaNode::Variable("x".into());
    }
    let variables: Vec<String> = nodes.iter().filter_map(|n| n.variable().map(str::to_string)).collect();
    let triples = nodes
        .windows(2)
        .map(|w| {
            let rel = format!("r{}", rng.gen_range(0..relations + 1));
            if rng.gen_bool(0.5) {
                SchemaTriple::new(w[0].clone(), &rel, w[1].clone())
            } else {
                SchemaTriple::new(w[1].clone(), &rel, w[0].clone())
            }
        })
        .collect();
    let answer = variables.choose(rng).unwrap().clone();
    let mut schema = QuestionSchema::from_triples(triples, &answer);
    if rng.gen_bool(0.3) {
        let subject = variables.choose(rng).unwrap().clone();
        schema = schema.with_constraint(ConstraintKind::Equality, &subject, &format!("e{}", rng.gen_range(0..entities)));
    }
    schema
}
