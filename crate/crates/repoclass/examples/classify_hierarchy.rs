//! Top-down hierarchical classification with optional early stopping.
//!
//! Trains one classifier per internal node of a 2x2 hierarchy on generated
//! pseudo documents, then descends the tree greedily for new documents —
//! once all the way to a leaf, and once with a confidence gate that stops
//! descending below the first uncertain decision.
//!
//!     cargo run --example classify_hierarchy

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repoclass::classifier::{CnnConfig, HierarchicalModel, PathStep};
use repoclass::corpus::{BackgroundDistribution, Document, LabelHierarchy, Vocabulary};
use repoclass::pseudogen::{GenConfig, Generator, WordVectors};
use repoclass::topics::{random_unit_vector, VmfComponent, VmfMixture};

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn main() -> anyhow::Result<()> {
    let hierarchy = LabelHierarchy::from_json_str(
        r#"{"id":"root","name":"Root","children":[
            {"id":"games","name":"Games","children":[
                {"id":"puzzle","name":"Puzzle","keyword":"puzzle"},
                {"id":"shooter","name":"Shooter","keyword":"shooter"}]},
            {"id":"tools","name":"Tools","children":[
                {"id":"linter","name":"Linter","keyword":"linter"},
                {"id":"builder","name":"Builder","keyword":"builder"}]}]}"#,
    )?;

    // Leaf topic directions: the two "games" leaves share a positive first
    // axis, the two "tools" leaves a negative one, so every level is
    // separable.
    let dim = 6;
    let axis = |i: usize, sign: f64, tilt: usize| {
        let mut v = vec![0.0; dim];
        v[i] = sign;
        v[tilt] = 0.8;
        normalize(v)
    };
    let leaf_mu: BTreeMap<&str, Vec<f64>> = [
        ("puzzle", axis(0, 1.0, 1)),
        ("shooter", axis(0, 1.0, 2)),
        ("linter", axis(0, -1.0, 3)),
        ("builder", axis(0, -1.0, 4)),
    ]
    .into();

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let map: BTreeMap<String, Vec<f64>> = (0..80)
        .map(|i| (format!("t{i:02}"), random_unit_vector(dim, &mut rng)))
        .collect();
    let vocab = Vocabulary::from_tokens(map.keys().cloned().collect());
    let words = WordVectors::from_map(&map, &vocab)?;
    let every_token = Document {
        repo_id: "bg".into(),
        tokens: (0..vocab.len() as u32).collect(),
    };
    let background = BackgroundDistribution::from_documents(&[every_token], vocab.len())?;

    // One mixture per internal node, components aligned to its children.
    let mixture_for = |children: &[&str], kappa: f64| VmfMixture {
        components: children
            .iter()
            .map(|c| VmfComponent {
                mu: leaf_mu
                    .get(c)
                    .cloned()
                    .unwrap_or_else(|| {
                        // An internal child's direction: the mean of its leaves.
                        let leaves: Vec<&Vec<f64>> = leaf_mu
                            .iter()
                            .filter(|(l, _)| {
                                hierarchy.ancestors(l).unwrap().contains(&c.to_string())
                            })
                            .map(|(_, v)| v)
                            .collect();
                        let mut mean = vec![0.0; dim];
                        for v in &leaves {
                            for (m, x) in mean.iter_mut().zip(*v) {
                                *m += x / leaves.len() as f64;
                            }
                        }
                        normalize(mean)
                    }),
                kappa,
            })
            .collect(),
        weights: vec![1.0 / children.len() as f64; children.len()],
        child_ids: children.iter().map(|c| c.to_string()).collect(),
        ll_trace: vec![],
    };
    let mixtures: BTreeMap<String, VmfMixture> = [
        ("root".to_string(), mixture_for(&["games", "tools"], 25.0)),
        ("games".to_string(), mixture_for(&["puzzle", "shooter"], 40.0)),
        ("tools".to_string(), mixture_for(&["linter", "builder"], 40.0)),
    ]
    .into();

    let generator = Generator::new(
        &words,
        &background,
        GenConfig {
            docs_per_child: 250,
            beta: 0.2,
            tau: 30,
            avg_doc_len: 40,
            seed: 5,
        },
    )?;
    let mut docs_by_node = BTreeMap::new();
    for (node, mixture) in &mixtures {
        docs_by_node.insert(node.clone(), generator.generate_class(node, mixture)?);
    }

    let config = CnnConfig {
        filter_widths: vec![2, 3],
        filters_per_width: 8,
        epochs: 20,
        ..CnnConfig::default()
    };
    let model = HierarchicalModel::train_all(&hierarchy, &docs_by_node, &words, &config)?;
    println!("trained classifiers for {:?}\n", model.classifiers.keys());

    // Confidence is the running product of local probabilities down the path.
    let show = |steps: &[PathStep]| -> String {
        steps
            .iter()
            .map(|s| format!("{} ({:.2})", s.label, s.confidence))
            .collect::<Vec<_>>()
            .join(" -> ")
    };

    // Fresh documents from each leaf's topic, classified two ways.
    let eval = Generator::new(
        &words,
        &background,
        GenConfig { docs_per_child: 1, seed: 77, ..*generator.config() },
    )?;
    for (node, children) in [("games", ["puzzle", "shooter"]), ("tools", ["linter", "builder"])] {
        for (child_index, child) in children.iter().enumerate() {
            let mut doc_rng = eval.doc_rng(node, child_index, 0);
            let doc = eval.generate(node, &mixtures[node], child_index, &mut doc_rng)?;
            println!("document from {child}:");
            println!("  to leaf:  {}", show(&model.predict_path(&doc.tokens)?));
            println!(
                "  gated .75: {}",
                show(&model.predict_path_with_stop(&doc.tokens, 0.75)?)
            );
        }
    }

    // A junk document: uniform random tokens match no topic. The plain
    // descent still commits to a leaf; the gate keeps the first, uncertain
    // step and refuses to go deeper.
    let junk: Vec<u32> = (0..40).map(|_| rng.gen_range(0..vocab.len() as u32)).collect();
    println!("uniform-noise document:");
    println!("  to leaf:  {}", show(&model.predict_path(&junk)?));
    println!(
        "  gated .75: {}",
        show(&model.predict_path_with_stop(&junk, 0.75)?)
    );
    Ok(())
}
