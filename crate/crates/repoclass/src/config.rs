//! Pipeline configuration: one TOML file governs every stage.
//!
//! The file is sectioned per module. Unknown keys are rejected everywhere,
//! and every field has a documented default, so an empty file is a valid,
//! fully specified configuration. There is exactly one seed — the top-level
//! `seed` — and each randomized stage derives its own stream from it, so
//! stage sections carry no seed keys. A SHA-256 hash of the effective
//! configuration (including the seed) is stamped on every artifact for
//! provenance checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::CnnConfig;
use crate::corpus::TokenizerConfig;
use crate::embedding::TrainConfig;
use crate::error::{Error, Result};
use crate::hin::EdgeKind;
use crate::pseudogen::GenConfig;
use crate::synth::SynthConfig;

/// Embedding settings (see [`TrainConfig`] for semantics).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSection {
    pub dim: usize,
    pub negative_samples: usize,
    pub samples_per_edge: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub workers: usize,
    pub metapaths: Vec<(EdgeKind, f64)>,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        EmbedSection {
            dim: t.dim,
            negative_samples: t.negative_samples,
            samples_per_edge: t.samples_per_edge,
            lr_initial: t.lr_initial,
            lr_final: t.lr_final,
            workers: t.workers,
            metapaths: t.metapaths,
        }
    }
}

impl EmbedSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            negative_samples: self.negative_samples,
            samples_per_edge: self.samples_per_edge,
            lr_initial: self.lr_initial,
            lr_final: self.lr_final,
            workers: self.workers,
            metapaths: self.metapaths.clone(),
            seed,
        }
    }
}

/// Keyword-enrichment settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnrichSection {
    /// Minimum document frequency for candidate tokens.
    pub min_df: u32,
    /// Per-class keyword cap for the no-collision exits.
    pub cap: usize,
}

impl Default for EnrichSection {
    fn default() -> Self {
        EnrichSection {
            min_df: crate::enrich::DEFAULT_MIN_DF,
            cap: crate::enrich::DEFAULT_CAP,
        }
    }
}

/// Pseudo-document generation settings (see [`GenConfig`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub docs_per_child: usize,
    pub beta: f64,
    pub tau: usize,
    /// 0 means "use the corpus mean document length".
    pub avg_doc_len: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        let g = GenConfig::default();
        GenSection {
            docs_per_child: g.docs_per_child,
            beta: g.beta,
            tau: g.tau,
            avg_doc_len: 0,
        }
    }
}

impl GenSection {
    pub fn gen_config(&self, seed: u64, corpus_mean_len: f64) -> GenConfig {
        let avg = if self.avg_doc_len == 0 {
            corpus_mean_len.round().max(2.0) as usize
        } else {
            self.avg_doc_len
        };
        GenConfig {
            docs_per_child: self.docs_per_child,
            beta: self.beta,
            tau: self.tau,
            avg_doc_len: avg,
            seed,
        }
    }
}

/// Local-classifier settings (see [`CnnConfig`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = CnnConfig::default();
        ClassifierSection {
            filter_widths: c.filter_widths,
            filters_per_width: c.filters_per_width,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
        }
    }
}

impl ClassifierSection {
    pub fn cnn_config(&self, seed: u64) -> CnnConfig {
        CnnConfig {
            filter_widths: self.filter_widths.clone(),
            filters_per_width: self.filters_per_width,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

/// Evaluation and inference-time settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Exit nonzero when any scope's micro F1 falls below this.
    pub fail_under: Option<f64>,
    /// Confidence gate for early path stopping; descend-to-leaf when unset.
    pub stop_threshold: Option<f64>,
}

/// Synthetic-corpus settings (see [`SynthConfig`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub level1: usize,
    pub leaves_per: usize,
    pub repos: usize,
    pub topical_tokens: usize,
    pub background_tokens: usize,
    pub topical_fraction: f64,
    pub mean_doc_len: usize,
    pub users_per_leaf: usize,
    pub tags_per_leaf: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            level1: s.level1,
            leaves_per: s.leaves_per,
            repos: s.repos,
            topical_tokens: s.topical_tokens,
            background_tokens: s.background_tokens,
            topical_fraction: s.topical_fraction,
            mean_doc_len: s.mean_doc_len,
            users_per_leaf: s.users_per_leaf,
            tags_per_leaf: s.tags_per_leaf,
        }
    }
}

impl SynthSection {
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            level1: self.level1,
            leaves_per: self.leaves_per,
            repos: self.repos,
            topical_tokens: self.topical_tokens,
            background_tokens: self.background_tokens,
            topical_fraction: self.topical_fraction,
            mean_doc_len: self.mean_doc_len,
            users_per_leaf: self.users_per_leaf,
            tags_per_leaf: self.tags_per_leaf,
            seed,
        }
    }
}

/// The whole pipeline configuration. An empty TOML file yields the
/// defaults shown on each field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Corpus JSONL path (default `corpus.jsonl`).
    pub corpus: PathBuf,
    /// Hierarchy JSON path (default `hierarchy.json`).
    pub hierarchy: PathBuf,
    /// Directory for derived artifacts (default `work`).
    pub workdir: PathBuf,
    /// The single global seed (default 42); every randomized stage derives
    /// its own stream from it.
    pub seed: u64,
    pub tokenizer: TokenizerConfig,
    pub embedding: EmbedSection,
    pub enrichment: EnrichSection,
    pub generation: GenSection,
    pub classifier: ClassifierSection,
    pub evaluation: EvalSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            hierarchy: PathBuf::from("hierarchy.json"),
            workdir: PathBuf::from("work"),
            seed: 42,
            tokenizer: TokenizerConfig::default(),
            embedding: EmbedSection::default(),
            enrichment: EnrichSection::default(),
            generation: GenSection::default(),
            classifier: ClassifierSection::default(),
            evaluation: EvalSection::default(),
            synth: SynthSection::default(),
        }
    }
}

/// Deterministic per-stage seed stream from the global seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 length"))
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: PipelineConfig = toml::from_str(&text).map_err(|e| {
            Error::Config(format!("{}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.embedding.train_config(0).validate()?;
        self.generation.gen_config(0, 100.0).validate()?;
        self.classifier.cnn_config(0).validate()?;
        self.synth.synth_config(0).validate()?;
        if self.enrichment.cap == 0 {
            return Err(Error::Validation("enrichment cap must be positive".into()));
        }
        for t in [self.evaluation.fail_under, self.evaluation.stop_threshold]
            .into_iter()
            .flatten()
        {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Validation(format!(
                    "thresholds must lie in [0, 1], got {t}"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 (hex) of every setting that can shape artifact bytes, seed
    /// included. Stamped on every artifact; stages refuse inputs with a
    /// different stamp. File locations and the report-only `fail_under`
    /// threshold stay out, so moving artifacts or tightening a CI gate
    /// never invalidates them.
    pub fn hash(&self) -> String {
        let content = serde_json::json!({
            "seed": self.seed,
            "tokenizer": self.tokenizer,
            "embedding": self.embedding,
            "enrichment": self.enrichment,
            "generation": self.generation,
            "classifier": self.classifier,
            "stop_threshold": self.evaluation.stop_threshold,
            "synth": self.synth,
        });
        let digest = Sha256::digest(content.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The default configuration as a commented TOML document.
    pub fn example_toml() -> String {
        toml::to_string_pretty(&PipelineConfig::default()).expect("config serialization")
    }
}
