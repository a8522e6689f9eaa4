//! Medical knowledge triples, entity standardization and per-turn triple
//! retrieval.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::SemanticLabel;
use crate::similarity::{similarity_above, Similarity};
use crate::Error;

/// Standardization accepts a match whose similarity lies in `[0.9, 1]`.
pub const STANDARDIZE_MIN_SIMILARITY: f64 = 0.9;

/// Default number of triples retrieved per turn.
pub const DEFAULT_K_TRIPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl KnowledgeTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        KnowledgeTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.head.is_empty() {
            Err("empty head")
        } else if self.relation.is_empty() {
            Err("empty relation")
        } else if self.tail.is_empty() {
            Err("empty tail")
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    triples: Vec<KnowledgeTriple>,
    entity_index: BTreeMap<String, Vec<usize>>,
    entity_chars: Vec<(String, Vec<char>)>,
}

impl KnowledgeBase {
    /// Builds the base, dropping repeated triples (first occurrence wins).
    pub fn from_triples(triples: impl IntoIterator<Item = KnowledgeTriple>) -> Self {
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for t in triples {
            if seen.insert(t.clone()) {
                kept.push(t);
            }
        }
        let mut entity_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (id, t) in kept.iter().enumerate() {
            entity_index.entry(t.head.clone()).or_default().push(id);
            if t.tail != t.head {
                entity_index.entry(t.tail.clone()).or_default().push(id);
            }
        }
        let entity_chars = entity_index
            .keys()
            .map(|e| (e.clone(), e.chars().collect()))
            .collect();
        KnowledgeBase {
            triples: kept,
            entity_index,
            entity_chars,
        }
    }

    /// Tab-separated `head<TAB>relation<TAB>tail`, one triple per line.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, Error> {
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: alloc::format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let t = KnowledgeTriple::new(fields[0], fields[1], fields[2]);
            t.check().map_err(|m| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            })?;
            triples.push(t);
        }
        Ok(Self::from_triples(triples))
    }

    /// One `{"head","relation","tail"}` object per line.
    pub fn parse_jsonl(text: &str) -> Result<Self, Error> {
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: KnowledgeTriple = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            t.check().map_err(|m| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            })?;
            triples.push(t);
        }
        Ok(Self::from_triples(triples))
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Indexed entities in lexicographic order.
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entity_index.keys().map(String::as_str)
    }

    pub fn contains_entity(&self, entity: &str) -> bool {
        self.entity_index.contains_key(entity)
    }

    /// Ids of triples whose head or tail is `entity`, ascending.
    pub fn triples_of(&self, entity: &str) -> &[usize] {
        self.entity_index.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Most similar indexed entity and its score. Ties go to the
    /// lexicographically smallest entity.
    pub fn best_match(&self, mention: &str) -> Option<(&str, Similarity)> {
        let mention: Vec<char> = mention.chars().collect();
        let mut best: Option<(&str, Similarity)> = None;
        for (entity, chars) in &self.entity_chars {
            let floor = best.map(|(_, s)| s).unwrap_or(Similarity::ZERO);
            let found = match best {
                // First candidate always counts, even at score zero.
                None => Some(crate::similarity::similarity_chars(&mention, chars)),
                Some(_) => similarity_above(&mention, chars, floor),
            };
            if let Some(s) = found {
                if best.is_none() || s > floor {
                    best = Some((entity.as_str(), s));
                    if s == Similarity::ONE {
                        break;
                    }
                }
            }
        }
        best
    }

    /// The canonical entity for `mention`, if the best match scores in
    /// `[0.9, 1]`.
    pub fn standardize_entity(&self, mention: &str) -> Option<&str> {
        if let Some((entity, _)) = self.entity_index.get_key_value(mention) {
            return Some(entity.as_str());
        }
        self.best_match(mention)
            .filter(|(_, s)| s.score() >= STANDARDIZE_MIN_SIMILARITY)
            .map(|(e, _)| e)
    }

    /// Triples related to the values of `labels`, at most `k` of them.
    ///
    /// Each value is standardized first; every triple touching the resulting
    /// entity is collected. Output is ordered by the position of the first
    /// value that reached it, then relation, head and tail.
    pub fn retrieve(&self, labels: &[SemanticLabel], k: usize) -> Vec<KnowledgeTriple> {
        let mut first_seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut order = 0usize;
        for value in labels.iter().filter_map(|l| l.value.as_deref()) {
            let Some(entity) = self.standardize_entity(value) else {
                continue;
            };
            for &id in self.triples_of(entity) {
                first_seen.entry(id).or_insert(order);
            }
            order += 1;
        }
        let mut hits: Vec<(usize, &KnowledgeTriple)> = first_seen
            .into_iter()
            .map(|(id, ord)| (ord, &self.triples[id]))
            .collect();
        hits.sort_by(|(oa, a), (ob, b)| {
            oa.cmp(ob)
                .then_with(|| a.relation.cmp(&b.relation))
                .then_with(|| a.head.cmp(&b.head))
                .then_with(|| a.tail.cmp(&b.tail))
        });
        hits.into_iter().take(k).map(|(_, t)| t.clone()).collect()
    }
}

/// Entity to alias list, used by alias substitution.
pub type AliasLexicon = BTreeMap<String, Vec<String>>;

/// `entity<TAB>alias1,alias2,...` per line.
pub fn parse_alias_lexicon(text: &str) -> Result<AliasLexicon, Error> {
    let mut lexicon = AliasLexicon::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((entity, aliases)) = line.split_once('\t') else {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected entity<TAB>aliases".to_string(),
            });
        };
        let entity = entity.trim();
        let aliases: Vec<String> = aliases
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty() && *a != entity)
            .map(String::from)
            .collect();
        if entity.is_empty() || aliases.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "entity and at least one alias required".to_string(),
            });
        }
        let slot = lexicon.entry(entity.to_string()).or_default();
        for a in aliases {
            if !slot.contains(&a) {
                slot.push(a);
            }
        }
    }
    Ok(lexicon)
}
