//! Repository records, label hierarchies, documents and vocabulary.
//!
//! A corpus is a JSONL file of repository records (owner, name, tags,
//! description, README, optional gold label path) plus a JSON label
//! hierarchy whose leaves each carry exactly one seed keyword. This module
//! parses and validates both, tokenizes records into documents, and builds
//! the vocabulary and the corpus-wide background word distribution that the
//! downstream stages consume.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One repository's multi-modal signals.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RepoRecord {
    pub id: String,
    pub user: String,
    pub name: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub readme: String,
    /// Gold label path in root-to-node order, evaluation only.
    #[serde(rename = "labels", default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<Vec<String>>,
}

/// A tokenized record: description tokens followed by README tokens,
/// mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub repo_id: String,
    pub tokens: Vec<u32>,
}

/// Tokenizer settings shared by every stage that touches text.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Filter the built-in stopword list out of documents (tags, name
    /// segments and seed keywords are never filtered).
    pub stopwords: bool,
    /// Documents are truncated to this many tokens.
    pub max_doc_tokens: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            stopwords: true,
            max_doc_tokens: 10_000,
        }
    }
}

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "being", "between", "both", "but", "by", "can", "did", "do", "does", "down", "each",
    "few", "for", "from", "further", "had", "has", "have", "he", "her", "here", "his", "how", "if",
    "in", "into", "is", "it", "its", "just", "me", "more", "most", "my", "no", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "out", "over", "own", "same", "she", "so",
    "some", "such", "than", "that", "the", "their", "them", "then", "there", "they", "this", "to",
    "too", "under", "up", "very", "was", "we", "were", "when", "where", "which", "while", "why",
    "will", "with", "you", "your",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Lowercase and split on non-alphanumeric boundaries, keeping tokens of
/// length >= 2 that contain at least one letter. Purely numeric runs are
/// dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            push_token(&mut out, std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        push_token(&mut out, current);
    }
    out
}

fn push_token(out: &mut Vec<String>, token: String) {
    if token.chars().count() >= 2 && token.chars().any(|c| c.is_alphabetic()) {
        out.push(token);
    }
}

/// Split a repository name on '-', '_' and whitespace, dropping empty
/// segments and preserving order and case.
pub fn segment_name(name: &str) -> Vec<String> {
    name.split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Document token strings for a record: tokenizer(description) followed by
/// tokenizer(readme), with stopword filtering and truncation applied.
pub fn document_token_strings(record: &RepoRecord, cfg: &TokenizerConfig) -> Vec<String> {
    let mut toks = tokenize(&record.description);
    toks.extend(tokenize(&record.readme));
    if cfg.stopwords {
        toks.retain(|t| !is_stopword(t));
    }
    toks.truncate(cfg.max_doc_tokens);
    toks
}

/// Load a JSONL corpus, preserving input order and rejecting duplicate ids.
pub fn load_corpus(path: &Path) -> Result<Vec<RepoRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RepoRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if record.id.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: "record id must be nonempty".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate record id {:?} at line {}",
                record.id,
                idx + 1
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Write records as JSONL.
pub fn save_corpus(path: &Path, records: &[RepoRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Label hierarchy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LabelNode {
    pub id: String,
    pub name: String,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub keyword: Option<String>,
}

/// Rooted tree of categories; every leaf carries exactly one seed keyword.
#[derive(Debug, Clone)]
pub struct LabelHierarchy {
    nodes: BTreeMap<String, LabelNode>,
    root: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeSpec {
    id: String,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keyword: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeSpec>,
}

impl LabelHierarchy {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let spec: NodeSpec = serde_json::from_str(json)
            .map_err(|e| Error::Validation(format!("hierarchy parse error: {e}")))?;
        let mut nodes = BTreeMap::new();
        let root = spec.id.clone();
        flatten(&spec, None, &mut nodes)?;
        let h = LabelHierarchy { nodes, root };
        h.validate()?;
        Ok(h)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        fn build(h: &LabelHierarchy, id: &str) -> NodeSpec {
            let n = &h.nodes[id];
            NodeSpec {
                id: n.id.clone(),
                name: n.name.clone(),
                keyword: n.keyword.clone(),
                children: n.children.iter().map(|c| build(h, c)).collect(),
            }
        }
        serde_json::to_string_pretty(&build(self, &self.root)).expect("hierarchy serialization")
    }

    fn validate(&self) -> Result<()> {
        for node in self.nodes.values() {
            let is_leaf = node.children.is_empty();
            match (&node.keyword, is_leaf) {
                (None, true) => {
                    return Err(Error::Validation(format!(
                        "leaf {:?} has no seed keyword",
                        node.id
                    )))
                }
                (Some(_), false) => {
                    return Err(Error::Validation(format!(
                        "internal node {:?} must not carry a keyword",
                        node.id
                    )))
                }
                _ => {}
            }
        }
        // Seeds must normalize to single, pairwise distinct tokens.
        let mut seen: HashMap<String, String> = HashMap::new();
        for (leaf, kw) in self.leaf_keywords()? {
            if let Some(other) = seen.insert(kw.clone(), leaf.clone()) {
                return Err(Error::Validation(format!(
                    "leaves {other:?} and {leaf:?} share the seed keyword {kw:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn node(&self, id: &str) -> Result<&LabelNode> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::UnknownLabel(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        self.nodes.get(id).is_some_and(|n| n.children.is_empty())
    }

    /// Leaf ids in depth-first order.
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&self.root, &mut |n| {
            if n.children.is_empty() {
                out.push(n.id.clone());
            }
        });
        out
    }

    /// Internal node ids (root included) in depth-first order.
    pub fn internal_nodes(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&self.root, &mut |n| {
            if !n.children.is_empty() {
                out.push(n.id.clone());
            }
        });
        out
    }

    fn walk(&self, id: &str, f: &mut impl FnMut(&LabelNode)) {
        let node = &self.nodes[id];
        f(node);
        for c in &node.children {
            self.walk(c, f);
        }
    }

    /// Ancestors of `id` from its parent up to and including the root.
    pub fn ancestors(&self, id: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let mut cur = self.node(id)?;
        while let Some(p) = &cur.parent {
            out.push(p.clone());
            cur = self.node(p)?;
        }
        Ok(out)
    }

    /// Path from the root's child down to `id` (the root itself is implicit).
    pub fn path_to(&self, id: &str) -> Result<Vec<String>> {
        let mut path = self.ancestors(id)?;
        path.reverse();
        path.push(id.to_string());
        path.retain(|n| n != &self.root);
        Ok(path)
    }

    /// Depth below the root: 1 for the root's children.
    pub fn level(&self, id: &str) -> Result<usize> {
        Ok(self.path_to(id)?.len())
    }

    pub fn max_depth(&self) -> usize {
        self.leaves()
            .iter()
            .map(|l| self.level(l).expect("leaf level"))
            .max()
            .unwrap_or(0)
    }

    /// All leaf ids in the subtree rooted at `id` (just `id` for a leaf).
    pub fn subtree_leaves(&self, id: &str) -> Result<Vec<String>> {
        self.node(id)?;
        let mut out = Vec::new();
        self.walk(id, &mut |n| {
            if n.children.is_empty() {
                out.push(n.id.clone());
            }
        });
        Ok(out)
    }

    /// Map leaf id -> normalized seed keyword token. Seeds that do not
    /// normalize to exactly one token are rejected.
    pub fn leaf_keywords(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for leaf in self.leaves() {
            let raw = self.nodes[&leaf]
                .keyword
                .clone()
                .expect("leaves carry keywords");
            let toks = tokenize(&raw);
            if toks.len() != 1 {
                return Err(Error::Validation(format!(
                    "seed keyword {raw:?} of leaf {leaf:?} must normalize to exactly one token, got {toks:?}"
                )));
            }
            out.insert(leaf, toks.into_iter().next().unwrap());
        }
        Ok(out)
    }

    /// Check that a gold label list is a root-to-node path (root implicit).
    pub fn validate_path(&self, labels: &[String]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::Validation("empty label path".into()));
        }
        let mut expected_parent = self.root.clone();
        for label in labels {
            let node = self.node(label)?;
            if node.parent.as_deref() != Some(expected_parent.as_str()) {
                return Err(Error::Validation(format!(
                    "label {label:?} does not follow {expected_parent:?} in the hierarchy"
                )));
            }
            expected_parent = label.clone();
        }
        Ok(())
    }
}

fn flatten(
    spec: &NodeSpec,
    parent: Option<&str>,
    nodes: &mut BTreeMap<String, LabelNode>,
) -> Result<()> {
    if nodes.contains_key(&spec.id) {
        return Err(Error::Validation(format!(
            "duplicate hierarchy node id {:?}",
            spec.id
        )));
    }
    nodes.insert(
        spec.id.clone(),
        LabelNode {
            id: spec.id.clone(),
            name: spec.name.clone(),
            parent: parent.map(str::to_owned),
            children: spec.children.iter().map(|c| c.id.clone()).collect(),
            keyword: spec.keyword.clone(),
        },
    );
    for child in &spec.children {
        flatten(child, Some(&spec.id), nodes)?;
    }
    Ok(())
}

/// Check every record's gold labels against the hierarchy.
pub fn validate_labels(records: &[RepoRecord], hierarchy: &LabelHierarchy) -> Result<()> {
    for r in records {
        if let Some(labels) = &r.gold_labels {
            hierarchy
                .validate_path(labels)
                .map_err(|e| Error::Validation(format!("record {:?}: {e}", r.id)))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Token <-> dense id mapping plus per-token document and corpus frequencies
/// (frequencies count document occurrences only).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    corpus_freq: Vec<u64>,
}

impl Vocabulary {
    /// Vocabulary over an explicit token set with zeroed frequencies
    /// (synthetic corpora, tests); ids follow sorted token order.
    pub fn from_tokens(tokens: BTreeSet<String>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let n = tokens.len();
        Vocabulary {
            tokens,
            index,
            doc_freq: vec![0; n],
            corpus_freq: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq[id as usize]
    }

    pub fn corpus_freq(&self, id: u32) -> u64 {
        self.corpus_freq[id as usize]
    }
}

/// Union of document tokens, tag tokens, segmented name tokens and seed
/// keywords. Ids are dense and assigned in sorted token order, so the
/// result is independent of record order.
pub fn build_vocabulary(
    records: &[RepoRecord],
    hierarchy: &LabelHierarchy,
    cfg: &TokenizerConfig,
) -> Result<Vocabulary> {
    let mut token_set: HashSet<String> = HashSet::new();
    for r in records {
        token_set.extend(document_token_strings(r, cfg));
        for tag in &r.tags {
            token_set.extend(tokenize(tag));
        }
        for seg in segment_name(&r.name) {
            token_set.extend(tokenize(&seg));
        }
    }
    for kw in hierarchy.leaf_keywords()?.values() {
        token_set.insert(kw.clone());
    }

    let mut tokens: Vec<String> = token_set.into_iter().collect();
    tokens.sort();
    let index: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut doc_freq = vec![0u32; tokens.len()];
    let mut corpus_freq = vec![0u64; tokens.len()];
    for r in records {
        let mut in_doc: HashSet<u32> = HashSet::new();
        for t in document_token_strings(r, cfg) {
            let id = index[&t];
            corpus_freq[id as usize] += 1;
            in_doc.insert(id);
        }
        for id in in_doc {
            doc_freq[id as usize] += 1;
        }
    }

    Ok(Vocabulary {
        tokens,
        index,
        doc_freq,
        corpus_freq,
    })
}

/// Map a record to its Document under a fixed vocabulary and config.
pub fn build_document(record: &RepoRecord, vocab: &Vocabulary, cfg: &TokenizerConfig) -> Document {
    let tokens = document_token_strings(record, cfg)
        .into_iter()
        .filter_map(|t| vocab.id(&t))
        .collect();
    Document {
        repo_id: record.id.clone(),
        tokens,
    }
}

/// Everything derived from the raw records in one pass.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<RepoRecord>,
    pub vocab: Vocabulary,
    pub documents: Vec<Document>,
}

pub fn build_corpus(
    records: Vec<RepoRecord>,
    hierarchy: &LabelHierarchy,
    cfg: &TokenizerConfig,
) -> Result<Corpus> {
    let vocab = build_vocabulary(&records, hierarchy, cfg)?;
    let documents = records
        .iter()
        .map(|r| build_document(r, &vocab, cfg))
        .collect();
    Ok(Corpus {
        records,
        vocab,
        documents,
    })
}

impl Corpus {
    /// Mean document length in tokens (0 for an empty corpus).
    pub fn mean_doc_len(&self) -> f64 {
        if self.documents.is_empty() {
            return 0.0;
        }
        let total: usize = self.documents.iter().map(|d| d.tokens.len()).sum();
        total as f64 / self.documents.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Background distribution
// ---------------------------------------------------------------------------

/// Word distribution of the entire corpus: corpus frequency / total tokens.
#[derive(Debug, Clone)]
pub struct BackgroundDistribution {
    probs: Vec<f64>,
}

impl BackgroundDistribution {
    pub fn from_documents(documents: &[Document], vocab_len: usize) -> Result<Self> {
        let mut counts = vec![0u64; vocab_len];
        let mut total = 0u64;
        for d in documents {
            for &t in &d.tokens {
                counts[t as usize] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::Validation(
                "cannot build a background distribution from an empty corpus".into(),
            ));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(BackgroundDistribution { probs })
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.probs[id as usize]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}
