use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A graph vertex. `canonical_name` is the normalized key; `label` keeps the
/// surface form of its first occurrence for display.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub canonical_name: String,
    pub label: String,
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub id: RelationId,
    pub name: String,
}

/// A directed labeled edge. Ordering is `(head, relation, tail)` by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }

    pub fn touches(&self, entity: EntityId) -> bool {
        self.head == entity || self.tail == entity
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KgError {
    #[error("line {line}: expected `head<TAB>relation<TAB>tail`, found {fields} field(s)")]
    MalformedLine { line: usize, fields: usize },
    #[error("line {line}: empty {field} field")]
    EmptyField { line: usize, field: &'static str },
    #[error("alias line {line}: expected `alias<TAB>canonical_name`")]
    MalformedAlias { line: usize },
    #[error("alias line {line}: canonical entity {name:?} is not in the graph")]
    UnknownCanonical { line: usize, name: String },
    #[error("alias {alias:?} maps to both {first:?} and {second:?}")]
    DuplicateAlias { alias: String, first: String, second: String },
    #[error("unknown entity id {0}")]
    UnknownEntity(EntityId),
    #[error("unknown relation id {0:?}")]
    UnknownRelation(RelationId),
    #[error("hop count must be at least 1")]
    ZeroHops,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for KgError {
    fn from(e: io::Error) -> Self {
        KgError::Io(e.to_string())
    }
}

/// Immutable triple store. Triples are kept sorted and deduplicated; the
/// adjacency indexes hold positions into that sorted list.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    triples: Vec<Triple>,
    by_head: Vec<Vec<usize>>,
    by_tail: Vec<Vec<usize>>,
    by_relation: Vec<Vec<usize>>,
    alias_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    pub(crate) max_alias_tokens: usize,
}

impl KnowledgeGraph {
    /// Reads the tab-separated triple format. Blank lines and `#` comments are
    /// skipped; duplicate triples collapse.
    pub fn load_triples<R: BufRead>(source: R) -> Result<Self, KgError> {
        let mut builder = GraphBuilder::default();
        builder.read_triples(source)?;
        Ok(builder.build())
    }

    /// Triples plus an optional `alias<TAB>canonical_name` file.
    pub fn load<R: BufRead, A: BufRead>(triples: R, aliases: Option<A>) -> Result<Self, KgError> {
        let mut builder = GraphBuilder::default();
        builder.read_triples(triples)?;
        if let Some(aliases) = aliases {
            builder.read_aliases(aliases)?;
        }
        Ok(builder.build())
    }

    pub fn load_files(graph: &Path, aliases: Option<&Path>) -> Result<Self, KgError> {
        let triples = BufReader::new(File::open(graph)?);
        match aliases {
            Some(path) => Self::load(triples, Some(BufReader::new(File::open(path)?))),
            None => Self::load(triples, None::<BufReader<File>>),
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// All triples in `(head, relation, tail)` id order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(id.index())
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(id.index())
    }

    /// Resolves a name or alias (normalized before lookup).
    pub fn resolve_entity(&self, name: &str) -> Option<EntityId> {
        self.alias_index.get(&normalize(name)).copied()
    }

    pub(crate) fn alias_lookup(&self, normalized: &str) -> Option<EntityId> {
        self.alias_index.get(normalized).copied()
    }

    pub fn resolve_relation(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(&normalize(name)).copied()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.binary_search(triple).is_ok()
    }

    pub fn outgoing(&self, head: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.bucket(&self.by_head, head.index())
    }

    pub fn incoming(&self, tail: EntityId) -> impl Iterator<Item = &Triple> + '_ {
        self.bucket(&self.by_tail, tail.index())
    }

    pub fn with_relation(&self, relation: RelationId) -> impl Iterator<Item = &Triple> + '_ {
        self.bucket(&self.by_relation, relation.index())
    }

    pub(crate) fn relation_count(&self, relation: RelationId) -> usize {
        self.by_relation.get(relation.index()).map_or(0, Vec::len)
    }

    fn bucket<'a>(&'a self, index: &'a [Vec<usize>], key: usize) -> impl Iterator<Item = &'a Triple> + 'a {
        index
            .get(key)
            .into_iter()
            .flat_map(move |positions| positions.iter().map(move |&p| &self.triples[p]))
    }

    pub fn label(&self, id: EntityId) -> &str {
        self.entities.get(id.index()).map_or("", |e| e.label.as_str())
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.get(id.index()).map_or("", |r| r.name.as_str())
    }

    /// `(head label, relation name, tail label)`.
    pub fn names(&self, triple: &Triple) -> Result<(&str, &str, &str), KgError> {
        let head = self.entity(triple.head).ok_or(KgError::UnknownEntity(triple.head))?;
        let relation = self
            .relation(triple.relation)
            .ok_or(KgError::UnknownRelation(triple.relation))?;
        let tail = self.entity(triple.tail).ok_or(KgError::UnknownEntity(triple.tail))?;
        Ok((&head.label, &relation.name, &tail.label))
    }

    /// `head relation tail` with underscores in the relation replaced by spaces.
    pub fn verbalize(&self, triple: &Triple) -> Result<String, KgError> {
        let (h, r, t) = self.names(triple)?;
        Ok(format!("{} {} {}", h, r.replace('_', " "), t))
    }

    /// Triples reachable from `seeds` within `hops` edge traversals. Edges are
    /// followed in both directions; output keeps stored direction and id order.
    pub fn neighborhood(&self, seeds: &[EntityId], hops: usize) -> Result<Vec<Triple>, KgError> {
        if hops == 0 {
            return Err(KgError::ZeroHops);
        }
        let mut depth: Vec<Option<usize>> = vec![None; self.entities.len()];
        let mut queue = VecDeque::new();
        for &seed in seeds {
            if seed.index() >= self.entities.len() {
                return Err(KgError::UnknownEntity(seed));
            }
            if depth[seed.index()].is_none() {
                depth[seed.index()] = Some(0);
                queue.push_back(seed);
            }
        }
        let mut found = BTreeSet::new();
        while let Some(node) = queue.pop_front() {
            let d = depth[node.index()].unwrap_or(0);
            if d >= hops {
                continue;
            }
            for triple in self.outgoing(node).chain(self.incoming(node)) {
                found.insert(*triple);
                let other = if triple.head == node { triple.tail } else { triple.head };
                if depth[other.index()].is_none() {
                    depth[other.index()] = Some(d + 1);
                    queue.push_back(other);
                }
            }
        }
        Ok(found.into_iter().collect())
    }

    /// Writes the graph back in the triple file format, using entity labels.
    pub fn write_triples<W: Write>(&self, mut out: W) -> io::Result<()> {
        for triple in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.label(triple.head),
                self.relation_name(triple.relation),
                self.label(triple.tail)
            )?;
        }
        Ok(())
    }

    /// Writes every non-canonical alias as `alias<TAB>canonical_name`.
    pub fn write_aliases<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entity in &self.entities {
            for alias in entity.aliases.iter().filter(|a| **a != entity.canonical_name) {
                writeln!(out, "{}\t{}", alias, entity.canonical_name)?;
            }
        }
        Ok(())
    }

    /// Triples as `(head, relation, tail)` canonical names, for comparisons
    /// that must not depend on id assignment.
    pub fn named_triples(&self) -> BTreeSet<(String, String, String)> {
        self.triples
            .iter()
            .map(|t| {
                (
                    self.entities[t.head.index()].canonical_name.clone(),
                    self.relations[t.relation.index()].name.clone(),
                    self.entities[t.tail.index()].canonical_name.clone(),
                )
            })
            .collect()
    }
}

/// Incremental construction; `build` freezes the graph and its indexes.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    triples: BTreeSet<Triple>,
    alias_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns the three names (first-occurrence order) and records the triple.
    /// Returns `None` if any name normalizes to the empty string.
    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> Option<Triple> {
        let (h, r, t) = (normalize(head), normalize(relation), normalize(tail));
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return None;
        }
        let head = self.intern_entity(h, head);
        let relation = self.intern_relation(r);
        let tail = self.intern_entity(t, tail);
        let triple = Triple::new(head, relation, tail);
        self.triples.insert(triple);
        Some(triple)
    }

    pub fn add_alias(&mut self, alias: &str, canonical: &str) -> Result<(), KgError> {
        let alias = normalize(alias);
        let canonical = normalize(canonical);
        let Some(&target) = self.alias_index.get(&canonical) else {
            return Err(KgError::UnknownCanonical { line: 0, name: canonical });
        };
        match self.alias_index.get(&alias) {
            Some(&existing) if existing != target => Err(KgError::DuplicateAlias {
                alias,
                first: self.entities[existing.index()].canonical_name.clone(),
                second: self.entities[target.index()].canonical_name.clone(),
            }),
            Some(_) => Ok(()),
            None => {
                self.alias_index.insert(alias.clone(), target);
                self.entities[target.index()].aliases.insert(alias);
                Ok(())
            }
        }
    }

    pub fn read_triples<R: BufRead>(&mut self, source: R) -> Result<(), KgError> {
        for (index, line) in source.lines().enumerate() {
            let line = line?;
            let number = index + 1;
            let content = line.trim_end_matches('\r');
            if content.trim().is_empty() || content.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::MalformedLine { line: number, fields: fields.len() });
            }
            for (value, field) in fields.iter().zip(["head", "relation", "tail"]) {
                if normalize(value).is_empty() {
                    return Err(KgError::EmptyField { line: number, field });
                }
            }
            self.add(fields[0], fields[1], fields[2]);
        }
        Ok(())
    }

    pub fn read_aliases<R: BufRead>(&mut self, source: R) -> Result<(), KgError> {
        for (index, line) in source.lines().enumerate() {
            let line = line?;
            let number = index + 1;
            let content = line.trim_end_matches('\r');
            if content.trim().is_empty() || content.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split('\t').collect();
            if fields.len() != 2 || normalize(fields[0]).is_empty() || normalize(fields[1]).is_empty() {
                return Err(KgError::MalformedAlias { line: number });
            }
            self.add_alias(fields[0], fields[1]).map_err(|e| match e {
                KgError::UnknownCanonical { name, .. } => KgError::UnknownCanonical { line: number, name },
                other => other,
            })?;
        }
        Ok(())
    }

    fn intern_entity(&mut self, normalized: String, surface: &str) -> EntityId {
        if let Some(&id) = self.alias_index.get(&normalized) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(Entity {
            id,
            canonical_name: normalized.clone(),
            label: surface.trim().to_string(),
            aliases: BTreeSet::from([normalized.clone()]),
        });
        self.alias_index.insert(normalized, id);
        id
    }

    fn intern_relation(&mut self, normalized: String) -> RelationId {
        if let Some(&id) = self.relation_index.get(&normalized) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(Relation { id, name: normalized.clone() });
        self.relation_index.insert(normalized, id);
        id
    }

    pub fn build(self) -> KnowledgeGraph {
        let triples: Vec<Triple> = self.triples.into_iter().collect();
        let mut by_head = vec![Vec::new(); self.entities.len()];
        let mut by_tail = vec![Vec::new(); self.entities.len()];
        let mut by_relation = vec![Vec::new(); self.relations.len()];
        for (position, triple) in triples.iter().enumerate() {
            by_head[triple.head.index()].push(position);
            by_tail[triple.tail.index()].push(position);
            by_relation[triple.relation.index()].push(position);
        }
        let max_alias_tokens = self
            .alias_index
            .keys()
            .map(|a| a.split(' ').count())
            .max()
            .unwrap_or(0);
        KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            triples,
            by_head,
            by_tail,
            by_relation,
            alias_index: self.alias_index,
            relation_index: self.relation_index,
            max_alias_tokens,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<KnowledgeGraph, KgError> {
        KnowledgeGraph::load_triples(text.as_bytes())
    }

    #[test]
    fn empty_stream() {
        let g = load("").unwrap();
        assert_eq!((g.entities().len(), g.relations().len(), g.triples().len()), (0, 0, 0));
    }

    #[test]
    fn single_triple() {
        let g = load("Paris\tcapital_of\tFrance\n").unwrap();
        assert_eq!((g.entities().len(), g.relations().len(), g.triples().len()), (2, 1, 1));
        assert_eq!(g.entity(EntityId(0)).unwrap().label, "Paris");
        assert_eq!(g.entity(EntityId(1)).unwrap().canonical_name, "france");
        assert_eq!(g.resolve_entity("FRANCE"), Some(EntityId(1)));
    }

    #[test]
    fn comments_blank_lines_and_duplicates() {
        let g = load("# header\n\na\tr\tb\na\tr\tb\r\nb\tr\tc\n").unwrap();
        assert_eq!(g.triples().len(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        assert_eq!(
            load("a\tr\tb\nbroken line\n").unwrap_err(),
            KgError::MalformedLine { line: 2, fields: 1 }
        );
        assert_eq!(
            load("a\tr\tb\tc\n").unwrap_err(),
            KgError::MalformedLine { line: 1, fields: 4 }
        );
    }

    #[test]
    fn empty_field_is_rejected() {
        assert_eq!(
            load("a\tr\tb\nx\t \ty\n").unwrap_err(),
            KgError::EmptyField { line: 2, field: "relation" }
        );
        assert_eq!(load("?\tr\tb\n").unwrap_err(), KgError::EmptyField { line: 1, field: "head" });
    }

    #[test]
    fn aliases_resolve_and_conflicts_fail() {
        let triples = "New York\tlocated_in\tUSA\nYork\tlocated_in\tEngland\n";
        let g = KnowledgeGraph::load(triples.as_bytes(), Some("NYC\tNew York\nBig Apple\tnew york\n".as_bytes()))
            .unwrap();
        assert_eq!(g.resolve_entity("nyc"), g.resolve_entity("New York"));
        assert_eq!(g.resolve_entity("the big apple"), None);
        assert!(g.entity(EntityId(0)).unwrap().aliases.contains("big apple"));

        let err = KnowledgeGraph::load(triples.as_bytes(), Some("York\tNew York\n".as_bytes())).unwrap_err();
        assert!(matches!(err, KgError::DuplicateAlias { .. }), "{err:?}");

        let err = KnowledgeGraph::load(triples.as_bytes(), Some("x\tAtlantis\n".as_bytes())).unwrap_err();
        assert_eq!(err, KgError::UnknownCanonical { line: 1, name: "atlantis".into() });
    }

    #[test]
    fn indexes_cover_every_triple_once() {
        let g = load("a\tr\tb\nb\ts\tc\na\ts\tc\nc\tr\ta\n").unwrap();
        let head_total: usize = g.entities().iter().map(|e| g.outgoing(e.id).count()).sum();
        let tail_total: usize = g.entities().iter().map(|e| g.incoming(e.id).count()).sum();
        let rel_total: usize = g.relations().iter().map(|r| g.with_relation(r.id).count()).sum();
        assert_eq!(head_total, g.triples().len());
        assert_eq!(tail_total, g.triples().len());
        assert_eq!(rel_total, g.triples().len());
        for e in g.entities() {
            assert!(g.outgoing(e.id).all(|t| t.head == e.id));
            assert!(g.incoming(e.id).all(|t| t.tail == e.id));
        }
    }

    #[test]
    fn neighborhood_examples() {
        let g = load("Paris\tcapital_of\tFrance\n").unwrap();
        let france = g.resolve_entity("France").unwrap();
        assert_eq!(g.neighborhood(&[france], 1).unwrap(), g.triples().to_vec());
        assert!(g.neighborhood(&[], 1).unwrap().is_empty());
        assert_eq!(g.neighborhood(&[EntityId(9)], 1).unwrap_err(), KgError::UnknownEntity(EntityId(9)));
        assert_eq!(g.neighborhood(&[france], 0).unwrap_err(), KgError::ZeroHops);

        let chain = load("a\tr\tb\nb\tr\tc\nc\tr\td\n").unwrap();
        let a = chain.resolve_entity("a").unwrap();
        let got: Vec<String> = chain
            .neighborhood(&[a], 2)
            .unwrap()
            .iter()
            .map(|t| chain.verbalize(t).unwrap())
            .collect();
        assert_eq!(got, ["a r b", "b r c"]);
    }

    #[test]
    fn verbalize_replaces_underscores() {
        let g = load("Paris\tcapital_of\tFrance\n").unwrap();
        assert_eq!(g.verbalize(&g.triples()[0]).unwrap(), "Paris capital of France");
    }
}
