//! Generating labeled pseudo documents from class topic models.
//!
//! A document vector is drawn from the child's spherical topic, the nearest
//! words form its local vocabulary, and tokens are sampled from a mix of
//! that local softmax and the corpus background. Labels reserve the
//! background fraction evenly across children.
//!
//!     cargo run --example generate_pseudo_docs

use std::collections::BTreeMap;

use repoclass::corpus::{BackgroundDistribution, Document, Vocabulary};
use repoclass::pseudogen::{GenConfig, Generator, WordVectors};
use repoclass::topics::{VmfComponent, VmfMixture};

fn main() -> anyhow::Result<()> {
    // Hand-placed 2-D word vectors: "solar" words near 0 deg, "lunar" words
    // near 180 deg, two neutral words orthogonal to both.
    let mut placed: Vec<(String, f64)> = Vec::new();
    for i in 0..4 {
        placed.push((format!("solar{i}"), 4.0 * i as f64));
        placed.push((format!("lunar{i}"), 180.0 - 4.0 * i as f64));
    }
    placed.push(("nebula0".to_string(), 88.0));
    placed.push(("nebula1".to_string(), 92.0));

    let map: BTreeMap<String, Vec<f64>> = placed
        .iter()
        .map(|(token, deg)| {
            let rad = deg.to_radians();
            (token.clone(), vec![rad.cos(), rad.sin()])
        })
        .collect();
    let vocab = Vocabulary::from_tokens(map.keys().cloned().collect());
    let words = WordVectors::from_map(&map, &vocab)?;

    // Uniform background over the whole vocabulary.
    let every_token = Document {
        repo_id: "bg".into(),
        tokens: (0..vocab.len() as u32).collect(),
    };
    let background = BackgroundDistribution::from_documents(&[every_token], vocab.len())?;

    // One topic per child: "sunny" points at 0 deg, "moony" at 180 deg.
    let direction = |deg: f64| vec![deg.to_radians().cos(), deg.to_radians().sin()];
    let mixture = VmfMixture {
        components: vec![
            VmfComponent { mu: direction(0.0), kappa: 25.0 },
            VmfComponent { mu: direction(180.0), kappa: 25.0 },
        ],
        weights: vec![0.5, 0.5],
        child_ids: vec!["sunny".into(), "moony".into()],
        ll_trace: vec![],
    };

    let config = GenConfig {
        docs_per_child: 2,
        beta: 0.2,
        tau: 5,
        avg_doc_len: 30,
        seed: 11,
    };
    println!(
        "beta {} -> labels put {} on the source child and {} on each child\n",
        config.beta,
        1.0 - config.beta + config.beta / 2.0,
        config.beta / 2.0
    );

    let generator = Generator::new(&words, &background, config)?;
    for doc in generator.generate_class("sky", &mixture)? {
        let child = &mixture.child_ids[doc.child_index];
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &id in &doc.tokens {
            *counts.entry(vocab.token(id)).or_default() += 1;
        }
        let mut sorted: Vec<(&str, usize)> = counts.into_iter().collect();
        sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let listed: Vec<String> = sorted
            .iter()
            .map(|(token, count)| format!("{token} x{count}"))
            .collect();
        println!("child {child}: label {:?}", doc.label);
        println!("  {} tokens: {}\n", doc.tokens.len(), listed.join(", "));
    }
    Ok(())
}
