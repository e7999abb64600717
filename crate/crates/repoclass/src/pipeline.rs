//! Stage orchestration over persisted artifacts.
//!
//! Each stage reads its prerequisites from the work directory, writes one
//! artifact plus a deterministic `.meta.json` sidecar (stage name, config
//! hash, seed, input hashes), and appends a line to `manifest.jsonl`
//! (adds wall time). Stages refuse inputs stamped with a different config
//! hash unless forced, and a missing prerequisite names the subcommand
//! that produces it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::HierarchicalModel;
use crate::config::{stage_seed, PipelineConfig};
use crate::corpus::{build_corpus, load_corpus, save_corpus, Corpus, LabelHierarchy};
use crate::enrich::{build_candidate_pool, keyword_enrich, KeywordSets};
use crate::error::{Error, Result};
use crate::eval::{f1_report, EvalReport};
use crate::hin::{build_hin, HinGraph};
use crate::pseudogen::{load_pseudo_docs, save_pseudo_docs, Generator, PseudoDocument, WordVectors};
use crate::topics::{fit_class_models, load_models, save_models};

pub const EDGES_FILE: &str = "edges.tsv";
pub const EMBEDDING_FILE: &str = "embedding.tsv";
pub const KEYWORDS_FILE: &str = "keywords.json";
pub const TOPICS_FILE: &str = "topics.json";
pub const PSEUDO_DOCS_FILE: &str = "pseudo_docs.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Deterministic provenance stamp stored next to every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
}

/// One manifest line per completed stage (sidecar fields plus wall time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    pub output: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub wall_ms: u128,
}

/// One predicted path, as persisted in `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub path: Vec<String>,
    /// Cumulative confidence at each step of the path.
    pub confidence: Vec<f64>,
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, force: bool) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(&config.workdir)
            .map_err(|e| Error::io(config.workdir.display().to_string(), e))?;
        let config_hash = config.hash();
        Ok(Pipeline {
            config,
            config_hash,
            force,
        })
    }

    fn art(&self, name: &str) -> PathBuf {
        self.config.workdir.join(name)
    }

    /// Fails with the producing subcommand's name if the artifact is
    /// missing, and with a hash mismatch if it was made under a different
    /// configuration (unless forced).
    fn require(&self, path: &Path, producer: &str) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingStage {
                path: path.display().to_string(),
                stage: producer.to_string(),
            });
        }
        let meta = sidecar_path(path);
        if meta.exists() {
            let text = std::fs::read_to_string(&meta)
                .map_err(|e| Error::io(meta.display().to_string(), e))?;
            let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: meta.display().to_string(),
                line: 0,
                message: e.to_string(),
            })?;
            if sidecar.config_hash != self.config_hash {
                if self.force {
                    log::warn!(
                        "{} was produced under config {}, continuing because of --force",
                        path.display(),
                        &sidecar.config_hash[..12]
                    );
                } else {
                    return Err(Error::ConfigHashMismatch {
                        path: path.display().to_string(),
                        found: sidecar.config_hash,
                        expected: self.config_hash.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Writes the sidecar for `output` and appends the manifest line.
    fn finish(&self, stage: &str, seed: u64, inputs: &[&Path], output: &Path, t0: Instant) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for input in inputs {
            hashes.insert(input.display().to_string(), sha256_file(input)?);
        }
        let sidecar = Sidecar {
            stage: stage.to_string(),
            config_hash: self.config_hash.clone(),
            seed,
            inputs: hashes.clone(),
        };
        let meta = sidecar_path(output);
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialization");
        std::fs::write(&meta, json).map_err(|e| Error::io(meta.display().to_string(), e))?;

        let entry = ManifestEntry {
            stage: stage.to_string(),
            output: output.display().to_string(),
            config_hash: self.config_hash.clone(),
            seed,
            inputs: hashes,
            wall_ms: t0.elapsed().as_millis(),
        };
        let manifest = self.art(MANIFEST_FILE);
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest)
            .map_err(|e| Error::io(manifest.display().to_string(), e))?;
        writeln!(file, "{}", serde_json::to_string(&entry).expect("manifest serialization"))
            .map_err(|e| Error::io(manifest.display().to_string(), e))?;
        log::info!("{stage}: wrote {} ({} ms)", output.display(), entry.wall_ms);
        Ok(())
    }

    fn load_hierarchy(&self) -> Result<LabelHierarchy> {
        self.require(&self.config.hierarchy, "synth (or supply a hierarchy file)")?;
        LabelHierarchy::from_json_file(&self.config.hierarchy)
    }

    fn load_corpus_built(&self) -> Result<(LabelHierarchy, Corpus)> {
        self.require(&self.config.corpus, "fetch or synth")?;
        let hierarchy = self.load_hierarchy()?;
        let records = load_corpus(&self.config.corpus)?;
        let corpus = build_corpus(records, &hierarchy, &self.config.tokenizer)?;
        Ok((hierarchy, corpus))
    }

    fn load_word_vector_matrix(&self, corpus: &Corpus) -> Result<WordVectors> {
        let map = crate::embedding::load_word_vectors(&self.art(EMBEDDING_FILE))?;
        WordVectors::from_map(&map, &corpus.vocab)
    }

    /// Emits the synthetic corpus and hierarchy at the configured paths.
    pub fn run_synth(&self) -> Result<()> {
        let t0 = Instant::now();
        let seed = stage_seed(self.config.seed, "synth");
        let sc = self.config.synth.synth_config(seed);
        let out = crate::synth::synth_corpus(&sc)?;
        for p in [&self.config.corpus, &self.config.hierarchy] {
            if let Some(dir) = p.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)
                        .map_err(|e| Error::io(dir.display().to_string(), e))?;
                }
            }
        }
        std::fs::write(
            &self.config.hierarchy,
            crate::synth::synth_hierarchy_json(&sc),
        )
        .map_err(|e| Error::io(self.config.hierarchy.display().to_string(), e))?;
        save_corpus(&self.config.corpus, &out.records)?;
        self.finish("synth", seed, &[], &self.config.hierarchy, t0)?;
        self.finish("synth", seed, &[], &self.config.corpus, t0)
    }

    /// Download records into `spec.out` (usually the configured corpus)
    /// and stamp the result; returns the number of records written.
    pub fn run_fetch(&self, spec: &crate::fetch::FetchSpec) -> Result<usize> {
        let t0 = Instant::now();
        let written = crate::fetch::fetch_records(spec)?;
        self.finish("fetch", self.config.seed, &[], &spec.out, t0)?;
        Ok(written)
    }

    /// Corpus + hierarchy → `edges.tsv`.
    pub fn run_build_hin(&self) -> Result<()> {
        let t0 = Instant::now();
        let (hierarchy, corpus) = self.load_corpus_built()?;
        let graph = build_hin(&corpus.records, &corpus.documents, &corpus.vocab, &hierarchy)?;
        let out = self.art(EDGES_FILE);
        graph.dump_edges(&out)?;
        self.finish(
            "build-hin",
            self.config.seed,
            &[&self.config.corpus, &self.config.hierarchy],
            &out,
            t0,
        )
    }

    /// `edges.tsv` → `embedding.tsv`.
    pub fn run_embed(&self) -> Result<()> {
        let t0 = Instant::now();
        let edges = self.art(EDGES_FILE);
        self.require(&edges, "build-hin")?;
        let graph = HinGraph::load_edges(&edges)?;
        let seed = stage_seed(self.config.seed, "embed");
        let train_config = self.config.embedding.train_config(seed);
        let (table, stats) = crate::embedding::train(&graph, &train_config)?;
        log::info!(
            "embedding held-out loss trace: {:?}",
            stats.heldout_loss.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
        let out = self.art(EMBEDDING_FILE);
        crate::embedding::export_table(&table, &out)?;
        self.finish("embed", seed, &[&edges], &out, t0)
    }

    /// Embeddings + seeds → `keywords.json`.
    pub fn run_enrich(&self) -> Result<()> {
        let t0 = Instant::now();
        let embedding = self.art(EMBEDDING_FILE);
        self.require(&embedding, "embed")?;
        let (hierarchy, corpus) = self.load_corpus_built()?;
        let vectors = crate::embedding::load_word_vectors(&embedding)?;
        let seeds = hierarchy.leaf_keywords()?;
        let pool = build_candidate_pool(&corpus.vocab, &seeds, self.config.enrichment.min_df);
        let sets = keyword_enrich(&seeds, &vectors, &pool, self.config.enrichment.cap)?;
        let out = self.art(KEYWORDS_FILE);
        sets.save(&out)?;
        self.finish(
            "enrich",
            self.config.seed,
            &[&embedding, &self.config.corpus, &self.config.hierarchy],
            &out,
            t0,
        )
    }

    /// Keywords + embeddings → `topics.json`.
    pub fn run_fit_topics(&self) -> Result<()> {
        let t0 = Instant::now();
        let embedding = self.art(EMBEDDING_FILE);
        let keywords = self.art(KEYWORDS_FILE);
        self.require(&embedding, "embed")?;
        self.require(&keywords, "enrich")?;
        let hierarchy = self.load_hierarchy()?;
        let vectors = crate::embedding::load_word_vectors(&embedding)?;
        let sets = KeywordSets::load(&keywords)?;
        let models = fit_class_models(&hierarchy, &sets.sets, &vectors)?;
        let out = self.art(TOPICS_FILE);
        save_models(&out, &models)?;
        self.finish(
            "fit-topics",
            self.config.seed,
            &[&embedding, &keywords, &self.config.hierarchy],
            &out,
            t0,
        )
    }

    /// Topic models + embeddings + corpus statistics → `pseudo_docs.jsonl`.
    pub fn run_generate(&self) -> Result<()> {
        let t0 = Instant::now();
        let embedding = self.art(EMBEDDING_FILE);
        let topics = self.art(TOPICS_FILE);
        self.require(&embedding, "embed")?;
        self.require(&topics, "fit-topics")?;
        let (hierarchy, corpus) = self.load_corpus_built()?;
        let words = self.load_word_vector_matrix(&corpus)?;
        let background = crate::corpus::BackgroundDistribution::from_documents(
            &corpus.documents,
            corpus.vocab.len(),
        )?;
        let models = load_models(&topics)?;
        let seed = stage_seed(self.config.seed, "generate");
        let gen_config = self.config.generation.gen_config(seed, corpus.mean_doc_len());
        let generator = Generator::new(&words, &background, gen_config)?;
        let mut docs = Vec::new();
        for node in hierarchy.internal_nodes() {
            let mixture = models.get(&node).ok_or_else(|| {
                Error::Validation(format!("no topic model for internal node {node:?}"))
            })?;
            docs.extend(generator.generate_class(&node, mixture)?);
        }
        let out = self.art(PSEUDO_DOCS_FILE);
        save_pseudo_docs(&docs, &out)?;
        self.finish("generate", seed, &[&embedding, &topics], &out, t0)
    }

    /// Pseudo documents + embeddings → `model.json`.
    pub fn run_train(&self) -> Result<()> {
        let t0 = Instant::now();
        let embedding = self.art(EMBEDDING_FILE);
        let pseudo = self.art(PSEUDO_DOCS_FILE);
        self.require(&embedding, "embed")?;
        self.require(&pseudo, "generate")?;
        let (hierarchy, corpus) = self.load_corpus_built()?;
        let words = self.load_word_vector_matrix(&corpus)?;
        let docs = load_pseudo_docs(&pseudo)?;
        let mut by_node: BTreeMap<String, Vec<PseudoDocument>> = BTreeMap::new();
        for doc in docs {
            by_node.entry(doc.class.clone()).or_default().push(doc);
        }
        let seed = stage_seed(self.config.seed, "train");
        let cnn_config = self.config.classifier.cnn_config(seed);
        let model = HierarchicalModel::train_all(&hierarchy, &by_node, &words, &cnn_config)?;
        let out = self.art(MODEL_FILE);
        model.save(&out)?;
        self.finish("train", seed, &[&embedding, &pseudo], &out, t0)
    }

    /// Model + corpus → `predictions.jsonl`.
    pub fn run_predict(&self) -> Result<()> {
        let t0 = Instant::now();
        let model_path = self.art(MODEL_FILE);
        self.require(&model_path, "train")?;
        let (_, corpus) = self.load_corpus_built()?;
        let model = HierarchicalModel::load(&model_path)?;
        let out = self.art(PREDICTIONS_FILE);
        let file =
            std::fs::File::create(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let mut writer = std::io::BufWriter::new(file);
        for (record, document) in corpus.records.iter().zip(&corpus.documents) {
            let steps = match self.config.evaluation.stop_threshold {
                Some(t) => model.predict_path_with_stop(&document.tokens, t)?,
                None => model.predict_path(&document.tokens)?,
            };
            let row = PredictionRow {
                id: record.id.clone(),
                path: steps.iter().map(|s| s.label.clone()).collect(),
                confidence: steps.iter().map(|s| s.confidence).collect(),
            };
            writeln!(writer, "{}", serde_json::to_string(&row).expect("prediction row"))
                .map_err(|e| Error::io(out.display().to_string(), e))?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(out.display().to_string(), e))?;
        drop(writer);
        self.finish(
            "predict",
            self.config.seed,
            &[&model_path, &self.config.corpus],
            &out,
            t0,
        )
    }

    /// Predictions + gold labels → `report.json`.
    pub fn run_evaluate(&self) -> Result<EvalReport> {
        let t0 = Instant::now();
        let predictions = self.art(PREDICTIONS_FILE);
        self.require(&predictions, "predict")?;
        let (hierarchy, corpus) = self.load_corpus_built()?;

        let mut gold = BTreeMap::new();
        for record in &corpus.records {
            if let Some(labels) = &record.gold_labels {
                gold.insert(record.id.clone(), labels.clone());
            }
        }
        if gold.is_empty() {
            return Err(Error::Validation(
                "corpus has no gold labels to evaluate against".into(),
            ));
        }
        if gold.len() < corpus.records.len() {
            log::warn!(
                "evaluating {} of {} records (rest lack gold labels)",
                gold.len(),
                corpus.records.len()
            );
        }

        let text = std::fs::read_to_string(&predictions)
            .map_err(|e| Error::io(predictions.display().to_string(), e))?;
        let mut predicted = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: PredictionRow = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: predictions.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if gold.contains_key(&row.id) {
                predicted.insert(row.id, row.path);
            }
        }

        let report = f1_report(&gold, &predicted, &hierarchy)?;
        let out = self.art(REPORT_FILE);
        report.save(&out)?;
        self.finish(
            "evaluate",
            self.config.seed,
            &[&predictions, &self.config.corpus, &self.config.hierarchy],
            &out,
            t0,
        )?;
        Ok(report)
    }

    /// All stages from the corpus to the report.
    pub fn run_e2e(&self) -> Result<EvalReport> {
        self.run_build_hin()?;
        self.run_embed()?;
        self.run_enrich()?;
        self.run_fit_topics()?;
        self.run_generate()?;
        self.run_train()?;
        self.run_predict()?;
        self.run_evaluate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;

    /// Small synthetic configuration that runs the full pipeline fast.
    pub(crate) fn fast_config(dir: &Path) -> PipelineConfig {
        let mut config = PipelineConfig::default();
        config.corpus = dir.join("corpus.jsonl");
        config.hierarchy = dir.join("hierarchy.json");
        config.workdir = dir.join("work");
        config.synth.repos = 120;
        config.synth.mean_doc_len = 60;
        config.embedding.dim = 16;
        config.embedding.samples_per_edge = 60.0;
        config.generation.docs_per_child = 150;
        config.generation.tau = 30;
        config.classifier.filter_widths = vec![2, 3];
        config.classifier.filters_per_width = 8;
        config
    }

    #[test]
    fn missing_prerequisites_name_the_producing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let config = fast_config(dir.path());
        let pipeline = Pipeline::new(config, false).unwrap();
        let err = pipeline.run_build_hin().unwrap_err();
        assert!(matches!(&err, Error::MissingStage { stage, .. } if stage.contains("synth")));
        pipeline.run_synth().unwrap();
        let err = pipeline.run_train().unwrap_err();
        assert!(
            matches!(&err, Error::MissingStage { stage, .. } if stage == "embed"),
            "{err}"
        );
        let err = pipeline.run_embed().unwrap_err();
        assert!(matches!(&err, Error::MissingStage { stage, .. } if stage == "build-hin"));
    }

    #[test]
    fn hash_mismatch_is_refused_and_force_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let config = fast_config(dir.path());
        let pipeline = Pipeline::new(config.clone(), false).unwrap();
        pipeline.run_synth().unwrap();
        pipeline.run_build_hin().unwrap();

        let mut other = config.clone();
        other.seed = 43;
        let other_pipeline = Pipeline::new(other.clone(), false).unwrap();
        let err = other_pipeline.run_embed().unwrap_err();
        assert!(matches!(err, Error::ConfigHashMismatch { .. }), "{err}");

        let forced = Pipeline::new(other, true).unwrap();
        forced.run_embed().unwrap();
        assert!(dir.path().join("work").join(EMBEDDING_FILE).exists());
    }

    #[test]
    fn e2e_on_a_synthetic_corpus_produces_a_sound_report() {
        let dir = tempfile::tempdir().unwrap();
        let config = fast_config(dir.path());
        let repos = config.synth.repos;
        let pipeline = Pipeline::new(config, false).unwrap();
        pipeline.run_synth().unwrap();
        let report = pipeline.run_e2e().unwrap();

        assert_eq!(report.repos, repos);
        let names: Vec<&str> = report.scopes.keys().map(String::as_str).collect();
        assert_eq!(names, vec!["level-1", "level-2", "overall"]);
        // The synthetic task is nearly separable; anything below this
        // signals mis-wired artifacts rather than a weak model.
        let overall = report.scopes["overall"].micro_f1;
        assert!(overall > 0.8, "overall micro F1 {overall}");

        let work = dir.path().join("work");
        for artifact in [
            EDGES_FILE,
            EMBEDDING_FILE,
            KEYWORDS_FILE,
            TOPICS_FILE,
            PSEUDO_DOCS_FILE,
            MODEL_FILE,
            PREDICTIONS_FILE,
            REPORT_FILE,
        ] {
            assert!(work.join(artifact).exists(), "{artifact} missing");
            assert!(sidecar_path(&work.join(artifact)).exists(), "{artifact} sidecar missing");
        }
        let saved = EvalReport::load(&work.join(REPORT_FILE)).unwrap();
        assert_eq!(saved.scopes["overall"].micro_f1, overall);
    }

    #[test]
    fn evaluate_refuses_a_corpus_without_gold_labels() {
        let dir = tempfile::tempdir().unwrap();
        let config = fast_config(dir.path());
        let pipeline = Pipeline::new(config.clone(), false).unwrap();
        pipeline.run_synth().unwrap();

        let mut records = crate::corpus::load_corpus(&config.corpus).unwrap();
        for r in &mut records {
            r.gold_labels = None;
        }
        crate::corpus::save_corpus(&config.corpus, &records).unwrap();
        std::fs::write(pipeline.art(PREDICTIONS_FILE), "").unwrap();

        let err = pipeline.run_evaluate().unwrap_err();
        assert!(err.to_string().contains("gold labels"), "{err}");
    }

    #[test]
    fn sidecars_record_stage_hash_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let config = fast_config(dir.path());
        let pipeline = Pipeline::new(config.clone(), false).unwrap();
        pipeline.run_synth().unwrap();
        pipeline.run_build_hin().unwrap();

        let meta = sidecar_path(&dir.path().join("work").join(EDGES_FILE));
        let sidecar: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(sidecar.stage, "build-hin");
        assert_eq!(sidecar.config_hash, config.hash());
        assert_eq!(sidecar.inputs.len(), 2);

        let manifest = std::fs::read_to_string(dir.path().join("work").join(MANIFEST_FILE)).unwrap();
        let stages: Vec<String> = manifest
            .lines()
            .map(|l| serde_json::from_str::<ManifestEntry>(l).unwrap().stage)
            .collect();
        assert_eq!(stages, vec!["synth", "synth", "build-hin"]);
    }
}
