//! Pseudo-document generation from fitted topic mixtures.
//!
//! Training data for the per-node classifiers is synthesized in two steps:
//! sample a document vector from the child-aligned mixture component, then
//! draw bag-of-words tokens from a mixture of the corpus-wide background
//! distribution (probability β) and a softmax over the document's local
//! vocabulary — the τ words nearest the document vector (probability 1−β).
//! Each document carries a soft label that concedes the background fraction
//! evenly to all children.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{BackgroundDistribution, Vocabulary};
use crate::error::{Error, Result};
use crate::topics::{sample_vmf, VmfMixture};

/// Hard ceiling on sampled document length.
pub const MAX_PSEUDO_DOC_LEN: usize = 1000;

/// One synthesized training document for an internal node's classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoDocument {
    /// Internal node whose classifier this document trains.
    pub class: String,
    /// Index of the child component the document vector was drawn from.
    pub child_index: usize,
    /// Vocabulary ids, sampled i.i.d.
    pub tokens: Vec<u32>,
    /// Soft target over the node's children.
    pub label: Vec<f64>,
    /// Sampled document vector (not persisted in dumps).
    #[serde(default, skip_serializing)]
    pub doc_vector: Vec<f64>,
}

/// Generation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Documents generated per child component.
    pub docs_per_child: usize,
    /// Probability mass drawn from the background distribution.
    pub beta: f64,
    /// Local-vocabulary size.
    pub tau: usize,
    /// Mean document length; actual lengths are uniform on
    /// [0.5·mean, 1.5·mean], capped at [`MAX_PSEUDO_DOC_LEN`].
    pub avg_doc_len: usize,
    /// Base seed for the per-document RNG streams.
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            docs_per_child: 500,
            beta: 0.2,
            tau: 50,
            avg_doc_len: 100,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.docs_per_child < 1 {
            return Err(Error::Validation("docs_per_child must be at least 1".into()));
        }
        if self.tau < 1 {
            return Err(Error::Validation("tau must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Validation(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        if self.avg_doc_len < 1 {
            return Err(Error::Validation("avg_doc_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Word vectors in a dense matrix aligned with vocabulary ids. Vocabulary
/// tokens the embedding never saw (tag-only or name-only tokens have no
/// edges to train on) get an all-zero row and are flagged absent.
#[derive(Debug, Clone)]
pub struct WordVectors {
    pub dim: usize,
    vectors: Vec<f64>,
    present: Vec<bool>,
}

impl WordVectors {
    /// Aligns a token → vector map (e.g. from a trained embedding table)
    /// with the vocabulary's dense ids. All vectors must share one
    /// dimension; tokens missing from the map are marked absent.
    pub fn from_map(map: &BTreeMap<String, Vec<f64>>, vocab: &Vocabulary) -> Result<Self> {
        let dim = map
            .values()
            .next()
            .map(|v| v.len())
            .ok_or_else(|| Error::Validation("empty word-vector map".into()))?;
        let mut vectors = Vec::with_capacity(vocab.len() * dim);
        let mut present = Vec::with_capacity(vocab.len());
        for id in 0..vocab.len() as u32 {
            let token = vocab.token(id);
            match map.get(token) {
                Some(v) if v.len() != dim => {
                    return Err(Error::Validation(format!(
                        "embedding for {token:?} has dimension {} (expected {dim})",
                        v.len()
                    )));
                }
                Some(v) => {
                    vectors.extend_from_slice(v);
                    present.push(true);
                }
                None => {
                    vectors.extend(std::iter::repeat(0.0).take(dim));
                    present.push(false);
                }
            }
        }
        Ok(WordVectors {
            dim,
            vectors,
            present,
        })
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    /// Whether this vocabulary id has a trained vector (absent ids read as
    /// zero rows).
    pub fn has(&self, id: u32) -> bool {
        self.present[id as usize]
    }

    /// Number of vocabulary ids with trained vectors.
    pub fn embedded(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let i = id as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }
}

/// The `tau` embedded vocabulary ids with the largest inner product against
/// the document vector, in similarity order; exact ties fall back to token
/// (= id) order. Asking for more words than have embeddings returns them
/// all with a warning.
pub fn local_vocabulary(doc_vector: &[f64], words: &WordVectors, tau: usize) -> Vec<u32> {
    let mut scored: Vec<(f64, u32)> = (0..words.len() as u32)
        .filter(|&id| words.has(id))
        .map(|id| {
            let s = words
                .row(id)
                .iter()
                .zip(doc_vector)
                .map(|(x, y)| x * y)
                .sum::<f64>();
            (s, id)
        })
        .collect();
    if tau > scored.len() {
        log::warn!(
            "local vocabulary of {tau} requested but only {} words exist",
            scored.len()
        );
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    scored.truncate(tau);
    scored.into_iter().map(|(_, id)| id).collect()
}

/// Token distribution for one pseudo document: background mass β spread as
/// β·p_B(w) over everything, plus (1−β) on a softmax of inner products over
/// the local vocabulary.
pub fn word_distribution(
    doc_vector: &[f64],
    local_vocab: &[u32],
    background: &BackgroundDistribution,
    beta: f64,
    words: &WordVectors,
) -> Vec<f64> {
    let mut probs: Vec<f64> = background.probs().iter().map(|p| beta * p).collect();
    if local_vocab.is_empty() {
        return probs;
    }
    let scores: Vec<f64> = local_vocab
        .iter()
        .map(|&id| {
            words
                .row(id)
                .iter()
                .zip(doc_vector)
                .map(|(x, y)| x * y)
                .sum::<f64>()
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    for (&id, e) in local_vocab.iter().zip(&exps) {
        probs[id as usize] += (1.0 - beta) * e / z;
    }
    probs
}

/// Closed-form soft label for a document sourced from `child_index` out of
/// `m` children: the background fraction β is split evenly, the rest goes
/// to the source child.
pub fn label_distribution(m: usize, beta: f64, child_index: usize) -> Vec<f64> {
    assert!(child_index < m, "child index out of range");
    let share = beta / m as f64;
    (0..m)
        .map(|i| if i == child_index { (1.0 - beta) + share } else { share })
        .collect()
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn sample_index(cum: &[f64], rng: &mut impl Rng) -> u32 {
    let total = *cum.last().expect("non-empty distribution");
    let x = rng.gen_range(0.0..total);
    cum.partition_point(|&c| c <= x) as u32
}

/// Bundles the fixed context (word vectors, background, settings) so callers
/// only pass the per-class mixture.
pub struct Generator<'a> {
    words: &'a WordVectors,
    background: &'a BackgroundDistribution,
    config: GenConfig,
}

impl<'a> Generator<'a> {
    pub fn new(
        words: &'a WordVectors,
        background: &'a BackgroundDistribution,
        config: GenConfig,
    ) -> Result<Self> {
        config.validate()?;
        if words.len() != background.len() {
            return Err(Error::Validation(format!(
                "word vectors cover {} tokens but background covers {}",
                words.len(),
                background.len()
            )));
        }
        Ok(Generator {
            words,
            background,
            config,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    /// One pseudo document for `child_index` of `class`, drawing all
    /// randomness from `rng`.
    pub fn generate(
        &self,
        class: &str,
        mixture: &VmfMixture,
        child_index: usize,
        rng: &mut impl Rng,
    ) -> Result<PseudoDocument> {
        let m = mixture.m();
        if child_index >= m {
            return Err(Error::Validation(format!(
                "child index {child_index} out of range for {m} components"
            )));
        }
        let component = &mixture.components[child_index];
        if component.mu.len() != self.words.dim {
            return Err(Error::Validation(format!(
                "mixture dimension {} does not match word vectors ({})",
                component.mu.len(),
                self.words.dim
            )));
        }
        let doc_vector = sample_vmf(component, rng);
        let local = local_vocabulary(&doc_vector, self.words, self.config.tau);
        let dist = word_distribution(
            &doc_vector,
            &local,
            self.background,
            self.config.beta,
            self.words,
        );
        let cum = cumulative(&dist);
        let lo = ((self.config.avg_doc_len as f64 * 0.5).round() as usize)
            .clamp(1, MAX_PSEUDO_DOC_LEN);
        let hi = ((self.config.avg_doc_len as f64 * 1.5).round() as usize)
            .clamp(lo, MAX_PSEUDO_DOC_LEN);
        let len = rng.gen_range(lo..=hi);
        let tokens = (0..len).map(|_| sample_index(&cum, rng)).collect();
        Ok(PseudoDocument {
            class: class.to_string(),
            child_index,
            tokens,
            label: label_distribution(m, self.config.beta, child_index),
            doc_vector,
        })
    }

    /// The full pseudo corpus for one internal node: `docs_per_child`
    /// documents per mixture component, each from its own RNG stream
    /// derived from (seed, class, child, index) so the output does not
    /// depend on generation order.
    pub fn generate_class(&self, class: &str, mixture: &VmfMixture) -> Result<Vec<PseudoDocument>> {
        let mut docs = Vec::with_capacity(mixture.m() * self.config.docs_per_child);
        for child_index in 0..mixture.m() {
            for doc_index in 0..self.config.docs_per_child {
                let mut rng = self.doc_rng(class, child_index, doc_index);
                docs.push(self.generate(class, mixture, child_index, &mut rng)?);
            }
        }
        Ok(docs)
    }

    /// Deterministic per-document stream: ChaCha8 keyed by a hash of
    /// (seed, class, child, index).
    pub fn doc_rng(&self, class: &str, child_index: usize, doc_index: usize) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(class.as_bytes());
        h.update([0u8]);
        h.update((child_index as u64).to_le_bytes());
        h.update((doc_index as u64).to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

/// Writes pseudo documents as JSONL rows of
/// `{class, child_index, tokens, label}`.
pub fn save_pseudo_docs(docs: &[PseudoDocument], path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("pseudo-document serialization");
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    out.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a pseudo-document dump (document vectors are not persisted and
/// come back empty).
pub fn load_pseudo_docs(path: &Path) -> Result<Vec<PseudoDocument>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: PseudoDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}
