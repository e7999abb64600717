//! Training a local text classifier on generated pseudo documents.
//!
//! Builds a two-child node's training set with the pseudo-document
//! generator, trains the convolutional classifier, and measures accuracy on
//! freshly generated held-out documents.
//!
//!     cargo run --example train_classifier

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use repoclass::classifier::{train_local, CnnConfig};
use repoclass::corpus::{BackgroundDistribution, Document, Vocabulary};
use repoclass::pseudogen::{GenConfig, Generator, WordVectors};
use repoclass::topics::{random_unit_vector, VmfComponent, VmfMixture};

fn main() -> anyhow::Result<()> {
    let dim = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(21);

    // Forty tokens with random unit vectors and a uniform background.
    let map: std::collections::BTreeMap<String, Vec<f64>> = (0..40)
        .map(|i| (format!("t{i:02}"), random_unit_vector(dim, &mut rng)))
        .collect();
    let vocab = Vocabulary::from_tokens(map.keys().cloned().collect());
    let words = WordVectors::from_map(&map, &vocab)?;
    let every_token = Document {
        repo_id: "bg".into(),
        tokens: (0..vocab.len() as u32).collect(),
    };
    let background = BackgroundDistribution::from_documents(&[every_token], vocab.len())?;

    let mixture = VmfMixture {
        components: (0..2)
            .map(|_| VmfComponent {
                mu: random_unit_vector(dim, &mut rng),
                kappa: 40.0,
            })
            .collect(),
        weights: vec![0.5, 0.5],
        child_ids: vec!["left".into(), "right".into()],
        ll_trace: vec![],
    };

    let generator = Generator::new(
        &words,
        &background,
        GenConfig {
            docs_per_child: 200,
            beta: 0.2,
            tau: 8,
            avg_doc_len: 40,
            seed: 3,
        },
    )?;
    let docs = generator.generate_class("node", &mixture)?;
    println!("generated {} pseudo documents for 2 children", docs.len());

    let config = CnnConfig {
        filter_widths: vec![2, 3],
        filters_per_width: 8,
        ..CnnConfig::default()
    };
    let classifier = train_local("node", &mixture.child_ids, &docs, &words, &config)?;
    let trace: Vec<String> = classifier
        .loss_trace
        .iter()
        .map(|l| format!("{l:.3}"))
        .collect();
    println!("mean KL loss at init then per epoch: {}", trace.join(" -> "));

    // Fresh documents the classifier has never seen.
    let eval = Generator::new(
        &words,
        &background,
        GenConfig {
            docs_per_child: 50,
            seed: 999,
            ..*generator.config()
        },
    )?;
    let mut correct = 0;
    let mut total = 0;
    for doc in eval.generate_class("node", &mixture)? {
        let probs = classifier.predict(&doc.tokens)?;
        let picked = if probs[0] >= probs[1] { 0 } else { 1 };
        correct += usize::from(picked == doc.child_index);
        total += 1;
    }
    println!(
        "held-out accuracy: {correct}/{total} = {:.1}%",
        100.0 * correct as f64 / total as f64
    );
    Ok(())
}
