//! Word-centric heterogeneous information network.
//!
//! Six node kinds (words, documents, users, tags, name tokens, labels) and
//! five weighted, undirected edge types, each tying a word to one of the
//! other kinds. Weights are raw term-frequency sums; label edges connect a
//! leaf's seed keyword to the leaf and every ancestor with unit weight. The
//! graph is immutable after construction and supports O(log deg)
//! weight-proportional neighbor sampling.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::corpus::{segment_name, tokenize, Document, LabelHierarchy, RepoRecord, Vocabulary};
use crate::error::{Error, Result};

/// Node kinds, ordered so that all Word nodes receive the lowest dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Word,
    Doc,
    User,
    Tag,
    NameToken,
    Label,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Word => "word",
            NodeKind::Doc => "doc",
            NodeKind::User => "user",
            NodeKind::Tag => "tag",
            NodeKind::NameToken => "name",
            NodeKind::Label => "label",
        }
    }
}

/// A typed node key. `(kind, key)` is unique within a graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub key: String,
}

impl NodeRef {
    pub fn new(kind: NodeKind, key: impl Into<String>) -> Self {
        NodeRef {
            kind,
            key: key.into(),
        }
    }

    pub fn word(key: impl Into<String>) -> Self {
        Self::new(NodeKind::Word, key)
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.key)
    }
}

/// The five edge types of the star schema; every edge touches a Word.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub enum EdgeKind {
    #[serde(rename = "WD")]
    WordDoc,
    #[serde(rename = "WU")]
    WordUser,
    #[serde(rename = "WT")]
    WordTag,
    #[serde(rename = "WN")]
    WordName,
    #[serde(rename = "WL")]
    WordLabel,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 5] = [
        EdgeKind::WordDoc,
        EdgeKind::WordUser,
        EdgeKind::WordTag,
        EdgeKind::WordName,
        EdgeKind::WordLabel,
    ];

    /// The non-word endpoint kind.
    pub fn other_kind(self) -> NodeKind {
        match self {
            EdgeKind::WordDoc => NodeKind::Doc,
            EdgeKind::WordUser => NodeKind::User,
            EdgeKind::WordTag => NodeKind::Tag,
            EdgeKind::WordName => NodeKind::NameToken,
            EdgeKind::WordLabel => NodeKind::Label,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::WordDoc => "WD",
            EdgeKind::WordUser => "WU",
            EdgeKind::WordTag => "WT",
            EdgeKind::WordName => "WN",
            EdgeKind::WordLabel => "WL",
        }
    }

    pub fn from_name(s: &str) -> Option<EdgeKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-node adjacency for one edge type, with prefix sums for sampling.
#[derive(Debug, Clone, Default)]
struct AdjList {
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl AdjList {
    fn push(&mut self, neighbor: u32, weight: f64) {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        self.neighbors.push(neighbor);
        self.weights.push(weight);
        self.cumulative.push(total + weight);
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Immutable star-schema graph with weight-proportional samplers.
#[derive(Debug, Clone)]
pub struct HinGraph {
    nodes: Vec<NodeRef>,
    index: HashMap<NodeRef, u32>,
    word_count: usize,
    adjacency: [HashMap<u32, AdjList>; 5],
    /// Word ids with at least one neighbor, per edge kind (walk starts).
    words_with: [Vec<u32>; 5],
    edge_count: usize,
}

impl HinGraph {
    fn from_edges(mut edges: Vec<(EdgeKind, NodeRef, NodeRef, f64)>) -> Result<Self> {
        let mut node_set: BTreeSet<NodeRef> = BTreeSet::new();
        for (kind, word, other, weight) in &edges {
            if *weight <= 0.0 {
                return Err(Error::Validation(format!(
                    "edge {}–{} has non-positive weight {weight}",
                    word, other
                )));
            }
            debug_assert_eq!(word.kind, NodeKind::Word);
            debug_assert_eq!(other.kind, kind.other_kind());
            node_set.insert(word.clone());
            node_set.insert(other.clone());
        }
        let nodes: Vec<NodeRef> = node_set.into_iter().collect();
        let index: HashMap<NodeRef, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        let word_count = nodes.iter().filter(|n| n.kind == NodeKind::Word).count();

        edges.sort_by(|a, b| (a.0, &a.1, &a.2).cmp(&(b.0, &b.1, &b.2)));
        let edge_count = edges.len();

        let mut adjacency: [HashMap<u32, AdjList>; 5] = Default::default();
        for (kind, word, other, weight) in &edges {
            let w = index[word];
            let o = index[other];
            let adj = &mut adjacency[kind.index()];
            adj.entry(w).or_default().push(o, *weight);
            adj.entry(o).or_default().push(w, *weight);
        }

        let mut words_with: [Vec<u32>; 5] = Default::default();
        for kind in EdgeKind::ALL {
            let adj = &adjacency[kind.index()];
            let mut ws: Vec<u32> = (0..word_count as u32)
                .filter(|id| adj.contains_key(id))
                .collect();
            ws.sort_unstable();
            words_with[kind.index()] = ws;
        }

        Ok(HinGraph {
            nodes,
            index,
            word_count,
            adjacency,
            words_with,
            edge_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Distinct (word, other) pairs across all edge types.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn node(&self, id: u32) -> &NodeRef {
        &self.nodes[id as usize]
    }

    pub fn node_id(&self, node: &NodeRef) -> Option<u32> {
        self.index.get(node).copied()
    }

    fn require_id(&self, node: &NodeRef) -> Result<u32> {
        self.node_id(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    /// All node ids of a kind, ascending. Word ids are always 0..word_count.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<u32> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == kind)
            .map(|(i, _)| i as u32)
            .collect()
    }

    /// Word ids that have at least one neighbor under `edge`.
    pub fn words_with_neighbors(&self, edge: EdgeKind) -> &[u32] {
        &self.words_with[edge.index()]
    }

    /// Adjacency of `id` under `edge` in stable (ascending neighbor id) order.
    pub fn neighbor_ids(&self, id: u32, edge: EdgeKind) -> (&[u32], &[f64]) {
        match self.adjacency[edge.index()].get(&id) {
            Some(adj) => (&adj.neighbors, &adj.weights),
            None => (&[], &[]),
        }
    }

    /// Adjacency by node reference, resolved to (NodeRef, weight) pairs.
    pub fn neighbors(&self, node: &NodeRef, edge: EdgeKind) -> Result<Vec<(NodeRef, f64)>> {
        let id = self.require_id(node)?;
        let (ns, ws) = self.neighbor_ids(id, edge);
        Ok(ns
            .iter()
            .zip(ws)
            .map(|(&n, &w)| (self.nodes[n as usize].clone(), w))
            .collect())
    }

    /// Total edge weight at `id` under `edge`.
    pub fn degree(&self, id: u32, edge: EdgeKind) -> f64 {
        self.adjacency[edge.index()]
            .get(&id)
            .map_or(0.0, AdjList::total)
    }

    /// Summed edge weight over all edge types (negative-sampling mass).
    pub fn total_degree(&self, id: u32) -> f64 {
        EdgeKind::ALL.iter().map(|&k| self.degree(id, k)).sum()
    }

    /// Draw a neighbor of `id` with probability weight / total weight.
    pub fn sample_neighbor_id(
        &self,
        id: u32,
        edge: EdgeKind,
        rng: &mut impl Rng,
    ) -> Result<u32> {
        let adj = self.adjacency[edge.index()].get(&id).ok_or_else(|| {
            Error::NoNeighbors {
                node: self.nodes[id as usize].to_string(),
                edge: edge.name().to_string(),
            }
        })?;
        let x = rng.gen_range(0.0..adj.total());
        let i = adj.cumulative.partition_point(|&c| c <= x);
        Ok(adj.neighbors[i.min(adj.neighbors.len() - 1)])
    }

    pub fn sample_neighbor(
        &self,
        node: &NodeRef,
        edge: EdgeKind,
        rng: &mut impl Rng,
    ) -> Result<NodeRef> {
        let id = self.require_id(node)?;
        let n = self.sample_neighbor_id(id, edge, rng)?;
        Ok(self.nodes[n as usize].clone())
    }

    /// Write the graph as `edge_type\tword_key\tother_key\tweight` lines,
    /// sorted, full round-trip precision.
    pub fn dump_edges(&self, path: &Path) -> Result<()> {
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut out = std::io::BufWriter::new(file);
        for kind in EdgeKind::ALL {
            let adj = &self.adjacency[kind.index()];
            let mut words: Vec<u32> = adj
                .keys()
                .copied()
                .filter(|&id| self.nodes[id as usize].kind == NodeKind::Word)
                .collect();
            words.sort_unstable();
            for w in words {
                let a = &adj[&w];
                for (&n, &weight) in a.neighbors.iter().zip(&a.weights) {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}",
                        kind.name(),
                        self.nodes[w as usize].key,
                        self.nodes[n as usize].key,
                        weight
                    )
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                }
            }
        }
        out.flush()
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Rebuild a graph from a `dump_edges` file.
    pub fn load_edges(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = BufReader::new(file);
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: msg,
            };
            let mut parts = line.split('\t');
            let kind = parts
                .next()
                .and_then(EdgeKind::from_name)
                .ok_or_else(|| parse("unknown edge type".into()))?;
            let word = parts
                .next()
                .ok_or_else(|| parse("missing word key".into()))?;
            let other = parts
                .next()
                .ok_or_else(|| parse("missing other key".into()))?;
            let weight: f64 = parts
                .next()
                .ok_or_else(|| parse("missing weight".into()))?
                .parse()
                .map_err(|e| parse(format!("bad weight: {e}")))?;
            edges.push((
                kind,
                NodeRef::word(word),
                NodeRef::new(kind.other_kind(), other),
                weight,
            ));
        }
        Self::from_edges(edges)
    }
}

/// Build the five edge types from a tokenized corpus and hierarchy.
///
/// Word–doc weights are term frequencies; word–user, word–tag and word–name
/// weights sum tf over the documents owned by the user / tagged with the tag
/// / whose name contains the token; word–label edges connect each leaf's
/// seed keyword to the leaf and all of its ancestors with weight 1.
pub fn build_hin(
    records: &[RepoRecord],
    documents: &[Document],
    vocab: &Vocabulary,
    hierarchy: &LabelHierarchy,
) -> Result<HinGraph> {
    if records.len() != documents.len() {
        return Err(Error::Validation(format!(
            "{} records but {} documents",
            records.len(),
            documents.len()
        )));
    }

    // Integer tf accumulators keyed by strings, so edge weights cannot
    // depend on record order or float summation order.
    let mut user_w: HashMap<(u32, String), u64> = HashMap::new();
    let mut tag_w: HashMap<(u32, String), u64> = HashMap::new();
    let mut name_w: HashMap<(u32, String), u64> = HashMap::new();
    let mut edges: Vec<(EdgeKind, NodeRef, NodeRef, f64)> = Vec::new();

    for (record, doc) in records.iter().zip(documents) {
        if record.id != doc.repo_id {
            return Err(Error::Validation(format!(
                "document order mismatch: record {:?} vs document {:?}",
                record.id, doc.repo_id
            )));
        }
        let mut tf: HashMap<u32, u64> = HashMap::new();
        for &t in &doc.tokens {
            *tf.entry(t).or_insert(0) += 1;
        }

        let tags: BTreeSet<String> = record.tags.iter().map(|t| t.to_lowercase()).collect();
        let name_tokens: BTreeSet<String> = segment_name(&record.name)
            .iter()
            .flat_map(|s| tokenize(s))
            .collect();

        for (&w, &count) in &tf {
            edges.push((
                EdgeKind::WordDoc,
                NodeRef::word(vocab.token(w)),
                NodeRef::new(NodeKind::Doc, record.id.clone()),
                count as f64,
            ));
            *user_w.entry((w, record.user.clone())).or_insert(0) += count;
            for tag in &tags {
                *tag_w.entry((w, tag.clone())).or_insert(0) += count;
            }
            for nt in &name_tokens {
                *name_w.entry((w, nt.clone())).or_insert(0) += count;
            }
        }
    }

    for ((w, user), count) in user_w {
        edges.push((
            EdgeKind::WordUser,
            NodeRef::word(vocab.token(w)),
            NodeRef::new(NodeKind::User, user),
            count as f64,
        ));
    }
    for ((w, tag), count) in tag_w {
        edges.push((
            EdgeKind::WordTag,
            NodeRef::word(vocab.token(w)),
            NodeRef::new(NodeKind::Tag, tag),
            count as f64,
        ));
    }
    for ((w, nt), count) in name_w {
        edges.push((
            EdgeKind::WordName,
            NodeRef::word(vocab.token(w)),
            NodeRef::new(NodeKind::NameToken, nt),
            count as f64,
        ));
    }

    for (leaf, keyword) in hierarchy.leaf_keywords()? {
        if vocab.id(&keyword).is_none() {
            return Err(Error::MissingSeedKeyword(keyword));
        }
        let mut targets = vec![leaf.clone()];
        targets.extend(hierarchy.ancestors(&leaf)?);
        for label in targets {
            edges.push((
                EdgeKind::WordLabel,
                NodeRef::word(keyword.clone()),
                NodeRef::new(NodeKind::Label, label),
                1.0,
            ));
        }
    }

    HinGraph::from_edges(edges)
}
