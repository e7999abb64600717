//! Synthetic planted-topic corpus generator.
//!
//! Builds a hierarchy of configurable shape (default two level-1 categories
//! with two leaves each) and emits repository records whose text mixes a
//! leaf-specific topical vocabulary with a shared background vocabulary.
//! Users and tags are correlated with leaves — every synthetic user owns
//! repos of exactly one leaf — so every edge type of the network carries
//! signal. The corpus is labeled, which makes end-to-end accuracy checks
//! decidable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelHierarchy, RepoRecord};
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Level-1 categories.
    pub level1: usize,
    /// Leaves per level-1 category.
    pub leaves_per: usize,
    pub repos: usize,
    /// Disjoint topical tokens per leaf.
    pub topical_tokens: usize,
    /// Shared background tokens.
    pub background_tokens: usize,
    /// Probability that a document token is topical rather than background.
    pub topical_fraction: f64,
    /// Document lengths are uniform on [mean/2, 3·mean/2].
    pub mean_doc_len: usize,
    /// Synthetic users per leaf.
    pub users_per_leaf: usize,
    /// Leaf-specific tag pool size.
    pub tags_per_leaf: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            level1: 2,
            leaves_per: 2,
            repos: 400,
            topical_tokens: 30,
            background_tokens: 100,
            topical_fraction: 0.7,
            mean_doc_len: 100,
            users_per_leaf: 5,
            tags_per_leaf: 4,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.level1 == 0 || self.leaves_per == 0 || self.repos == 0 {
            return Err(Error::Validation(
                "level1, leaves_per and repos must be positive".into(),
            ));
        }
        if self.topical_tokens == 0 || self.background_tokens == 0 {
            return Err(Error::Validation("token pools must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.topical_fraction) {
            return Err(Error::Validation("topical_fraction must lie in [0, 1]".into()));
        }
        if self.mean_doc_len < 2 || self.users_per_leaf == 0 || self.tags_per_leaf == 0 {
            return Err(Error::Validation(
                "mean_doc_len must be at least 2; user and tag pools non-empty".into(),
            ));
        }
        Ok(())
    }
}

fn topical_token(cat: usize, leaf: usize, k: usize) -> String {
    format!("tw{cat}x{leaf}n{k:02}")
}

fn background_token(k: usize) -> String {
    format!("bg{k:03}")
}

/// The generated hierarchy plus labeled records.
pub struct SynthCorpus {
    pub hierarchy: LabelHierarchy,
    pub records: Vec<RepoRecord>,
}

/// Hierarchy JSON for the configured shape; each leaf's seed keyword is its
/// first topical token.
pub fn synth_hierarchy_json(config: &SynthConfig) -> String {
    let children: Vec<serde_json::Value> = (0..config.level1)
        .map(|c| {
            let leaves: Vec<serde_json::Value> = (0..config.leaves_per)
                .map(|l| {
                    serde_json::json!({
                        "id": format!("cat{c}_leaf{l}"),
                        "name": format!("Category {c} Leaf {l}"),
                        "keyword": topical_token(c, l, 0),
                    })
                })
                .collect();
            serde_json::json!({
                "id": format!("cat{c}"),
                "name": format!("Category {c}"),
                "children": leaves,
            })
        })
        .collect();
    serde_json::json!({
        "id": "root",
        "name": "Root",
        "children": children,
    })
    .to_string()
}

pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let hierarchy = LabelHierarchy::from_json_str(&synth_hierarchy_json(config))?;
    let leaves: Vec<(usize, usize)> = (0..config.level1)
        .flat_map(|c| (0..config.leaves_per).map(move |l| (c, l)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(config.repos);
    for n in 0..config.repos {
        let (cat, leaf) = leaves[n % leaves.len()];
        let pick_token = |rng: &mut ChaCha8Rng| -> String {
            if rng.gen_range(0.0..1.0) < config.topical_fraction {
                topical_token(cat, leaf, rng.gen_range(0..config.topical_tokens))
            } else {
                background_token(rng.gen_range(0..config.background_tokens))
            }
        };

        let len = rng.gen_range(config.mean_doc_len / 2..=config.mean_doc_len * 3 / 2).max(2);
        let tokens: Vec<String> = (0..len).map(|_| pick_token(&mut rng)).collect();
        let desc_len = (len / 10).clamp(1, 8);
        let description = tokens[..desc_len].join(" ");
        let readme = tokens[desc_len..].join(" ");

        let name = format!(
            "{}-{}",
            topical_token(cat, leaf, rng.gen_range(0..config.topical_tokens)),
            topical_token(cat, leaf, rng.gen_range(0..config.topical_tokens))
        );
        let user = format!("user_{cat}_{leaf}_{}", rng.gen_range(0..config.users_per_leaf));
        let mut tags: Vec<String> = (0..rng.gen_range(1..=2))
            .map(|_| format!("tag{cat}x{leaf}v{}", rng.gen_range(0..config.tags_per_leaf)))
            .collect();
        tags.sort();
        tags.dedup();

        records.push(RepoRecord {
            id: format!("repo{n:04}"),
            user,
            name,
            tags,
            description,
            readme,
            gold_labels: Some(vec![format!("cat{cat}"), format!("cat{cat}_leaf{leaf}")]),
        });
    }
    Ok(SynthCorpus { hierarchy, records })
}
