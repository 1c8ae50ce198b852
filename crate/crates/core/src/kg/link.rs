use std::collections::BTreeSet;

use super::graph::{EntityId, KnowledgeGraph};
use crate::text::tokens;

/// A matched alias occurrence over question tokens `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    start: usize,
    len: usize,
    entity: EntityId,
}

impl KnowledgeGraph {
    /// Entities whose canonical name or an alias occurs in the normalized
    /// question as a contiguous token run. Overlapping matches are resolved
    /// longest first (leftmost on equal length). Sorted by id.
    pub fn link_entities(&self, question: &str) -> Vec<EntityId> {
        let words: Vec<String> = tokens(question).collect();
        let mut spans = Vec::new();
        for start in 0..words.len() {
            let longest = self.max_alias_tokens.min(words.len() - start);
            for len in (1..=longest).rev() {
                let key = words[start..start + len].join(" ");
                if let Some(entity) = self.alias_lookup(&key) {
                    spans.push(Span { start, len, entity });
                }
            }
        }
        spans.sort_by(|a, b| b.len.cmp(&a.len).then(a.start.cmp(&b.start)));

        let mut covered = vec![false; words.len()];
        let mut linked = BTreeSet::new();
        for span in spans {
            let range = span.start..span.start + span.len;
            if covered[range.clone()].iter().any(|&c| c) {
                continue;
            }
            covered[range].iter_mut().for_each(|c| *c = true);
            linked.insert(span.entity);
        }
        linked.into_iter().collect()
    }
}
