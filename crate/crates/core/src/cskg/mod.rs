//! Commonsense triples, topic subgraphs and variable bindings.
//!
//! Triple files are UTF-8 with one `head<TAB>relation<TAB>tail` per line.
//! Blank lines and lines starting with `#` are skipped. A topic is declared
//! with `topic<TAB>is_topic<TAB>true`; those lines are not graph edges.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::Path;

use thiserror::Error;

use crate::eqlang::{X_NODE, Y_NODE};
use crate::graph::{levi_transform, LabeledGraph, LeviGraph};

pub const TOPIC_RELATION: &str = "is_topic";
pub const BELONGS_TO: &str = "belong_to";
pub const DEFAULT_DEPTH: usize = 2;

#[derive(Debug, Error)]
pub enum CskgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("knowledge graph has no triples")]
    EmptyGraph,
    #[error("unknown topic `{0}`")]
    TopicNotFound(String),
    #[error("entity `{0}` is not in the knowledge graph")]
    EntityNotFound(String),
    #[error("entity `{entity}` is not connected to topic `{topic}`")]
    DisconnectedBinding { entity: String, topic: String },
    #[error("x and y must be bound to different entities, both are `{0}`")]
    SameBinding(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    topics: BTreeSet<String>,
    entities: BTreeSet<String>,
    duplicates: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VariableBinding {
    pub x: String,
    pub y: String,
}

#[derive(Clone, Debug)]
pub struct CskgInstance {
    pub topic: String,
    pub binding: VariableBinding,
    /// Induced subgraph; the bound entities are labelled with slot tokens.
    pub graph: LabeledGraph,
    /// Entity names in node order (before slot relabelling).
    pub entity_names: Vec<String>,
    pub levi: LeviGraph,
}

impl KnowledgeGraph {
    /// Parses triple-file text.
    pub fn parse(text: &str) -> Result<Self, CskgError> {
        let mut kg = KnowledgeGraph::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(CskgError::Parse {
                    line: i + 1,
                    message: format!(
                        "expected 3 non-empty tab-separated fields, found {}",
                        fields.len()
                    ),
                });
            }
            if fields[1] == TOPIC_RELATION {
                kg.topics.insert(fields[0].to_string());
                kg.entities.insert(fields[0].to_string());
                continue;
            }
            let t = Triple {
                head: fields[0].to_string(),
                relation: fields[1].to_string(),
                tail: fields[2].to_string(),
            };
            if seen.insert(t.clone()) {
                kg.entities.insert(t.head.clone());
                kg.entities.insert(t.tail.clone());
                kg.triples.push(t);
            } else {
                kg.duplicates += 1;
            }
        }
        if kg.triples.is_empty() {
            return Err(CskgError::EmptyGraph);
        }
        if kg.duplicates > 0 {
            log::warn!("collapsed {} duplicate triples", kg.duplicates);
        }
        Ok(kg)
    }

    pub fn load(path: &Path) -> Result<Self, CskgError> {
        let text = std::fs::read_to_string(path).map_err(|source| CskgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Serializes back to the triple-file format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.topics {
            out.push_str(&format!("{t}\t{TOPIC_RELATION}\ttrue\n"));
        }
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.head, t.relation, t.tail));
        }
        out
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.topics.iter().map(String::as_str)
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn relations(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.relation.as_str()).collect()
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn has_entity(&self, name: &str) -> bool {
        self.entities.contains(name)
    }

    pub fn is_topic(&self, name: &str) -> bool {
        self.topics.contains(name)
    }

    /// Entities with a `belong_to` edge into `topic`, sorted.
    pub fn members(&self, topic: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .triples
            .iter()
            .filter(|t| t.relation == BELONGS_TO && t.tail == topic)
            .map(|t| t.head.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// Tail of the first `(entity, relation, _)` triple.
    pub fn attribute(&self, entity: &str, relation: &str) -> Option<&str> {
        self.triples
            .iter()
            .find(|t| t.head == entity && t.relation == relation)
            .map(|t| t.tail.as_str())
    }

    fn outgoing(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for t in &self.triples {
            out.entry(&t.head).or_default().insert(&t.tail);
        }
        out
    }

    fn undirected(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for t in &self.triples {
            out.entry(&t.head).or_default().insert(&t.tail);
            out.entry(&t.tail).or_default().insert(&t.head);
        }
        out
    }
}

/// Shortest undirected path from `from` to `to`; neighbours are visited in
/// lexicographic order, so the path is deterministic.
fn shortest_path<'a>(
    adj: &BTreeMap<&'a str, BTreeSet<&'a str>>,
    from: &'a str,
    to: &'a str,
) -> Option<Vec<&'a str>> {
    let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![to];
            let mut cur = to;
            while let Some(p) = parent.get(cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &u in adj.get(v).into_iter().flatten() {
            if seen.insert(u) {
                parent.insert(u, v);
                queue.push_back(u);
            }
        }
    }
    None
}

/// Selects the subgraph for `topic` with `x`/`y` bound: everything reachable
/// along outgoing edges within `depth` hops of the topic or either bound
/// entity, plus the shortest undirected paths from each bound entity to the
/// topic, with all triples among those nodes.
pub fn topic_instance(
    kg: &KnowledgeGraph,
    topic: &str,
    binding: &VariableBinding,
    depth: usize,
) -> Result<CskgInstance, CskgError> {
    if !kg.is_topic(topic) {
        return Err(CskgError::TopicNotFound(topic.to_string()));
    }
    for e in [&binding.x, &binding.y] {
        if !kg.has_entity(e) {
            return Err(CskgError::EntityNotFound(e.clone()));
        }
    }
    if binding.x == binding.y {
        return Err(CskgError::SameBinding(binding.x.clone()));
    }

    let undirected = kg.undirected();
    let mut keep: BTreeSet<&str> = BTreeSet::from([topic]);
    for e in [binding.x.as_str(), binding.y.as_str()] {
        let path = shortest_path(&undirected, e, topic).ok_or_else(|| {
            CskgError::DisconnectedBinding {
                entity: e.to_string(),
                topic: topic.to_string(),
            }
        })?;
        keep.extend(path);
    }

    let outgoing = kg.outgoing();
    let mut frontier: Vec<&str> = vec![topic, binding.x.as_str(), binding.y.as_str()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for v in frontier {
            for &u in outgoing.get(v).into_iter().flatten() {
                if keep.insert(u) {
                    next.push(u);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }

    // Node order: x, y, topic, then the rest lexicographically.
    let head = [binding.x.as_str(), binding.y.as_str(), topic];
    let mut names: Vec<&str> = head.to_vec();
    names.extend(keep.iter().copied().filter(|n| !head.contains(n)));
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();

    let mut graph = LabeledGraph::new();
    for (i, n) in names.iter().enumerate() {
        graph.add_node(match i {
            0 => X_NODE.to_string(),
            1 => Y_NODE.to_string(),
            _ => n.to_string(),
        });
    }
    for t in kg.triples() {
        if let (Some(&h), Some(&tl)) = (index.get(t.head.as_str()), index.get(t.tail.as_str())) {
            graph.add_edge(h, &t.relation, tl);
        }
    }
    let levi = levi_transform(&graph);
    Ok(CskgInstance {
        topic: topic.to_string(),
        binding: binding.clone(),
        entity_names: names.iter().map(|s| s.to_string()).collect(),
        graph,
        levi,
    })
}
