//! Keyword-set enrichment by nearest neighbors on the unit sphere.
//!
//! Each leaf class starts from its single seed keyword. Rounds add to every
//! class the candidate with the highest inner product against the class's
//! original seed vector (never the set centroid); the loop stops as soon as
//! any two sets share a word, and then every class drops its last-added
//! word, which restores mutual exclusivity. A single class — or a pool that
//! runs dry — cannot trigger the stop condition, so a hard per-class cap
//! bounds the loop; those exits keep all added words.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Default per-class size cap for the no-collision exits.
pub const DEFAULT_CAP: usize = 100;

/// Minimum document frequency for enrichment candidates.
pub const DEFAULT_MIN_DF: u32 = 3;

/// Ordered keyword lists per leaf class; index in the list is the
/// expansion rank and rank 0 is always the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordSets {
    pub sets: BTreeMap<String, Vec<String>>,
}

impl KeywordSets {
    /// Aligned text table, one row per class.
    pub fn format_table(&self) -> String {
        let width = self
            .sets
            .keys()
            .map(|k| k.len())
            .max()
            .unwrap_or(5)
            .max("class".len());
        let mut out = format!("{:<width$}  keywords\n", "class");
        for (class, words) in &self.sets {
            out.push_str(&format!("{class:<width$}  {}\n", words.join(", ")));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("keyword set serialization");
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Tokens eligible for enrichment: document frequency >= `min_df`, plus the
/// seeds themselves (rare tokens make downstream topic fits noisy).
pub fn build_candidate_pool(
    vocab: &Vocabulary,
    seeds: &BTreeMap<String, String>,
    min_df: u32,
) -> BTreeSet<String> {
    let mut pool: BTreeSet<String> = (0..vocab.len() as u32)
        .filter(|&id| vocab.doc_freq(id) >= min_df)
        .map(|id| vocab.token(id).to_string())
        .collect();
    pool.extend(seeds.values().cloned());
    pool
}

/// Expand every class's seed into a keyword set (see module docs). `seeds`
/// maps leaf id to its seed token; all seeds need vectors and candidates
/// without vectors are ignored. Equal inner products break ties toward the
/// lexicographically smaller token.
pub fn keyword_enrich(
    seeds: &BTreeMap<String, String>,
    vectors: &BTreeMap<String, Vec<f64>>,
    candidates: &BTreeSet<String>,
    cap: usize,
) -> Result<KeywordSets> {
    if seeds.is_empty() {
        return Err(Error::Validation("no seed keywords given".into()));
    }
    if cap < 1 {
        return Err(Error::Validation("keyword cap must be at least 1".into()));
    }
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (class, seed) in seeds {
        if let Some(other) = seen.insert(seed, class) {
            return Err(Error::Validation(format!(
                "classes {other:?} and {class:?} share the seed {seed:?}"
            )));
        }
        if !vectors.contains_key(seed) {
            return Err(Error::Validation(format!(
                "seed {seed:?} of class {class:?} has no embedding"
            )));
        }
    }

    let classes: Vec<&String> = seeds.keys().collect();
    let mut pool: Vec<&String> = candidates
        .iter()
        .filter(|w| vectors.contains_key(*w))
        .collect();
    for seed in seeds.values() {
        if !candidates.contains(seed) {
            pool.push(seed);
        }
    }
    pool.sort();
    pool.dedup();

    // The per-class similarity order is fixed (always against the original
    // seed), so rank every class's candidates once and walk a cursor.
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut rankings: Vec<Vec<&String>> = Vec::with_capacity(classes.len());
    for class in &classes {
        let seed_vec = &vectors[&seeds[*class]];
        let mut ranked: Vec<(&String, f64)> = pool
            .iter()
            .map(|&w| (w, dot(seed_vec, &vectors[w])))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        rankings.push(ranked.into_iter().map(|(w, _)| w).collect());
    }

    let mut sets: Vec<Vec<String>> = classes
        .iter()
        .map(|c| vec![seeds[*c].clone()])
        .collect();
    let mut member: BTreeSet<(usize, &str)> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (i, seeds[*c].as_str()))
        .collect();
    let mut cursors = vec![0usize; classes.len()];
    let mut owners: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (seeds[*c].as_str(), i))
        .collect();
    let mut collided = false;

    'rounds: loop {
        // Alg. guard: proceed only while all distinct pairs are disjoint.
        if collided {
            break;
        }
        // Cap / exhaustion exits keep everything added so far.
        for (i, set) in sets.iter().enumerate() {
            if set.len() >= cap {
                break 'rounds;
            }
            let mut cursor = cursors[i];
            while cursor < rankings[i].len() && member.contains(&(i, rankings[i][cursor].as_str()))
            {
                cursor += 1;
            }
            cursors[i] = cursor;
            if cursor >= rankings[i].len() {
                log::warn!(
                    "candidate pool exhausted for class {:?}; stopping enrichment",
                    classes[i]
                );
                break 'rounds;
            }
        }
        for i in 0..classes.len() {
            // Cursors were advanced above but later classes' additions this
            // round may claim the pending candidate of an earlier class —
            // only membership in the own set disqualifies a candidate.
            let mut cursor = cursors[i];
            while member.contains(&(i, rankings[i][cursor].as_str())) {
                cursor += 1;
            }
            cursors[i] = cursor;
            let w = rankings[i][cursor];
            sets[i].push(w.clone());
            member.insert((i, w.as_str()));
            if let Some(&owner) = owners.get(w.as_str()) {
                if owner != i {
                    collided = true;
                }
            } else {
                owners.insert(w.as_str(), i);
            }
        }
    }

    if collided {
        for set in &mut sets {
            set.pop();
        }
    }

    Ok(KeywordSets {
        sets: classes
            .into_iter()
            .zip(sets)
            .map(|(c, s)| (c.clone(), s))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(angle_deg: f64) -> Vec<f64> {
        let a = angle_deg.to_radians();
        vec![a.cos(), a.sin()]
    }

    fn vectors_from(pairs: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    /// Literal round-by-round transcription of the enrichment pseudocode,
    /// with a fresh argmax scan every step (no shared ranking machinery).
    fn simulate(
        seeds: &BTreeMap<String, String>,
        vectors: &BTreeMap<String, Vec<f64>>,
        candidates: &BTreeSet<String>,
        cap: usize,
    ) -> BTreeMap<String, Vec<String>> {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let classes: Vec<String> = seeds.keys().cloned().collect();
        let mut pool: BTreeSet<String> = candidates
            .iter()
            .filter(|w| vectors.contains_key(*w))
            .cloned()
            .collect();
        pool.extend(seeds.values().cloned());
        let mut sets: Vec<Vec<String>> = classes.iter().map(|c| vec![seeds[c].clone()]).collect();

        let disjoint = |sets: &[Vec<String>]| {
            for i in 0..sets.len() {
                for j in (i + 1)..sets.len() {
                    if sets[i].iter().any(|w| sets[j].contains(w)) {
                        return false;
                    }
                }
            }
            true
        };

        let mut removed_last = false;
        while disjoint(&sets) {
            if sets.iter().any(|s| s.len() >= cap) {
                break;
            }
            let mut exhausted = false;
            for (i, class) in classes.iter().enumerate() {
                let seed_vec = &vectors[&seeds[class]];
                let best = pool
                    .iter()
                    .filter(|w| !sets[i].contains(*w))
                    .map(|w| (w, dot(seed_vec, &vectors[w])))
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| b.0.cmp(a.0)));
                match best {
                    Some((w, _)) => sets[i].push(w.clone()),
                    None => {
                        exhausted = true;
                        break;
                    }
                }
            }
            if exhausted {
                break;
            }
            if !disjoint(&sets) {
                for set in &mut sets {
                    set.pop();
                }
                removed_last = true;
                break;
            }
        }
        let _ = removed_last;
        classes.into_iter().zip(sets).collect()
    }

    #[test]
    fn immediate_collision_keeps_only_seeds() {
        // Each seed's nearest candidate is the other seed: round 1 collides
        // in both directions, the removal strips both additions.
        let vectors = vectors_from(&[
            ("east", unit(0.0)),
            ("northeast", unit(10.0)),
            ("west", unit(180.0)),
        ]);
        let seeds: BTreeMap<String, String> = [
            ("a".to_string(), "east".to_string()),
            ("b".to_string(), "northeast".to_string()),
        ]
        .into();
        let candidates: BTreeSet<String> =
            ["east", "northeast", "west"].iter().map(|s| s.to_string()).collect();
        let result = keyword_enrich(&seeds, &vectors, &candidates, 100).unwrap();
        assert_eq!(result.sets["a"], vec!["east"]);
        assert_eq!(result.sets["b"], vec!["northeast"]);
    }

    #[test]
    fn planted_two_cluster_geometry() {
        // Class a at 0 deg with friends at 5 and 10; class b at 180 with
        // friends at 175 and 170. Round 3 makes both classes reach across
        // (a takes 170, b takes 10), which collides; removal restores the
        // clean split.
        let vectors = vectors_from(&[
            ("a000", unit(0.0)),
            ("a005", unit(5.0)),
            ("a010", unit(10.0)),
            ("b170", unit(170.0)),
            ("b175", unit(175.0)),
            ("b180", unit(180.0)),
        ]);
        let seeds: BTreeMap<String, String> = [
            ("a".to_string(), "a000".to_string()),
            ("b".to_string(), "b180".to_string()),
        ]
        .into();
        let candidates: BTreeSet<String> = vectors.keys().cloned().collect();
        let result = keyword_enrich(&seeds, &vectors, &candidates, 100).unwrap();
        assert_eq!(result.sets["a"], vec!["a000", "a005", "a010"]);
        assert_eq!(result.sets["b"], vec!["b180", "b175", "b170"]);

        let sim = simulate(&seeds, &vectors, &candidates, 100);
        assert_eq!(result.sets["a"], sim["a"]);
        assert_eq!(result.sets["b"], sim["b"]);
    }

    #[test]
    fn single_class_hits_the_cap_without_removal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut vectors = BTreeMap::new();
        for i in 0..20 {
            vectors.insert(format!("w{i:02}"), crate::topics::random_unit_vector(3, &mut rng));
        }
        let seeds: BTreeMap<String, String> = [("only".to_string(), "w00".to_string())].into();
        let candidates: BTreeSet<String> = vectors.keys().cloned().collect();
        let result = keyword_enrich(&seeds, &vectors, &candidates, 10).unwrap();
        assert_eq!(result.sets["only"].len(), 10);
        assert_eq!(result.sets["only"][0], "w00");
    }

    #[test]
    fn single_class_pool_exhaustion_keeps_everything() {
        let vectors = vectors_from(&[
            ("s", unit(0.0)),
            ("p1", unit(20.0)),
            ("p2", unit(40.0)),
            ("p3", unit(60.0)),
        ]);
        let seeds: BTreeMap<String, String> = [("only".to_string(), "s".to_string())].into();
        let candidates: BTreeSet<String> = vectors.keys().cloned().collect();
        let result = keyword_enrich(&seeds, &vectors, &candidates, 100).unwrap();
        assert_eq!(result.sets["only"], vec!["s", "p1", "p2", "p3"]);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let vectors = vectors_from(&[("x", unit(0.0))]);
        let seeds: BTreeMap<String, String> = [
            ("a".to_string(), "x".to_string()),
            ("b".to_string(), "x".to_string()),
        ]
        .into();
        let candidates: BTreeSet<String> = vectors.keys().cloned().collect();
        assert!(keyword_enrich(&seeds, &vectors, &candidates, 100).is_err());
    }

    #[test]
    fn missing_seed_embedding_rejected() {
        let vectors = vectors_from(&[("x", unit(0.0))]);
        let seeds: BTreeMap<String, String> = [("a".to_string(), "ghost".to_string())].into();
        let candidates: BTreeSet<String> = vectors.keys().cloned().collect();
        let err = keyword_enrich(&seeds, &vectors, &candidates, 100).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
    ) -> (BTreeMap<String, String>, BTreeMap<String, Vec<f64>>, BTreeSet<String>) {
        let n_classes = rng.gen_range(1..=3);
        let n_words = rng.gen_range(n_classes.max(2)..=20);
        let mut vectors = BTreeMap::new();
        for i in 0..n_words {
            vectors.insert(
                format!("w{i:02}"),
                crate::topics::random_unit_vector(4, rng),
            );
        }
        let seeds: BTreeMap<String, String> = (0..n_classes)
            .map(|i| (format!("c{i}"), format!("w{i:02}")))
            .collect();
        let candidates: BTreeSet<String> = vectors.keys().cloned().collect();
        (seeds, vectors, candidates)
    }

    #[test]
    fn matches_simulator_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
        for round in 0..100 {
            let (seeds, vectors, candidates) = random_instance(&mut rng);
            let result = keyword_enrich(&seeds, &vectors, &candidates, 100).unwrap();
            let sim = simulate(&seeds, &vectors, &candidates, 100);
            assert_eq!(result.sets, sim, "instance {round} diverged");

            // Pairwise disjoint, seeds retained, similarity non-increasing.
            let classes: Vec<&String> = result.sets.keys().collect();
            for (i, a) in classes.iter().enumerate() {
                assert_eq!(result.sets[*a][0], seeds[*a]);
                let seed_vec = &vectors[&seeds[*a]];
                let sims: Vec<f64> = result.sets[*a]
                    .iter()
                    .map(|w| {
                        seed_vec
                            .iter()
                            .zip(&vectors[w])
                            .map(|(x, y)| x * y)
                            .sum::<f64>()
                    })
                    .collect();
                for pair in sims.windows(2) {
                    assert!(pair[0] >= pair[1] - 1e-12, "similarity increased: {sims:?}");
                }
                for b in classes.iter().skip(i + 1) {
                    assert!(
                        result.sets[*a].iter().all(|w| !result.sets[*b].contains(w)),
                        "sets {a} and {b} intersect"
                    );
                }
            }
        }
    }

    #[test]
    fn invariant_under_common_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (seeds, vectors, candidates) = random_instance(&mut rng);
        let base = keyword_enrich(&seeds, &vectors, &candidates, 100).unwrap();

        let u = crate::topics::random_unit_vector(4, &mut rng);
        let rotated: BTreeMap<String, Vec<f64>> = vectors
            .iter()
            .map(|(k, v)| {
                let f = 2.0 * v.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>();
                (
                    k.clone(),
                    v.iter().zip(&u).map(|(x, y)| x - f * y).collect(),
                )
            })
            .collect();
        let rot = keyword_enrich(&seeds, &rotated, &candidates, 100).unwrap();
        assert_eq!(base, rot);
    }

    #[test]
    fn save_load_round_trip_and_table() {
        let mut sets = BTreeMap::new();
        sets.insert("imgen".to_string(), vec!["dcgan".to_string(), "gan".to_string()]);
        sets.insert("seg".to_string(), vec!["segmentation".to_string()]);
        let ks = KeywordSets { sets };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keywords.json");
        ks.save(&path).unwrap();
        assert_eq!(KeywordSets::load(&path).unwrap(), ks);
        let table = ks.format_table();
        assert!(table.contains("imgen"));
        assert!(table.contains("dcgan, gan"));
    }

    #[test]
    fn candidate_pool_filters_by_document_frequency() {
        use crate::corpus::{build_vocabulary, LabelHierarchy, RepoRecord, TokenizerConfig};
        let h = LabelHierarchy::from_json_str(
            r#"{"id":"root","name":"R","children":[
                {"id":"a","name":"A","keyword":"rareseed"},
                {"id":"b","name":"B","keyword":"common"}]}"#,
        )
        .unwrap();
        let records: Vec<RepoRecord> = (0..4)
            .map(|i| RepoRecord {
                id: format!("r{i}"),
                user: "u".into(),
                name: "n".into(),
                tags: vec![],
                description: if i == 0 {
                    "common rare rareseed".to_string()
                } else {
                    "common filler".to_string()
                },
                readme: String::new(),
                gold_labels: None,
            })
            .collect();
        let vocab = build_vocabulary(&records, &h, &TokenizerConfig::default()).unwrap();
        let seeds: BTreeMap<String, String> = [
            ("a".to_string(), "rareseed".to_string()),
            ("b".to_string(), "common".to_string()),
        ]
        .into();
        let pool = build_candidate_pool(&vocab, &seeds, 3);
        assert!(pool.contains("common")); // df 4
        assert!(pool.contains("filler")); // df 3
        assert!(!pool.contains("rare")); // df 1
        assert!(pool.contains("rareseed")); // df 1 but a seed
    }
}
