//! Tokenization, vocabulary construction and label-hierarchy queries.
//!
//! Builds a three-repository corpus in memory, walks the label tree, and
//! shows how repository text (name, description, README, tags) turns into
//! vocabulary ids.
//!
//!     cargo run --example corpus_basics

use repoclass::corpus::{
    build_corpus, document_token_strings, LabelHierarchy, RepoRecord, TokenizerConfig,
};

fn record(id: &str, user: &str, name: &str, tags: &[&str], text: &str) -> RepoRecord {
    RepoRecord {
        id: id.into(),
        user: user.into(),
        name: name.into(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
        description: text.into(),
        readme: String::new(),
        gold_labels: None,
    }
}

fn main() -> anyhow::Result<()> {
    let hierarchy = LabelHierarchy::from_json_str(
        r#"{"id":"root","name":"Root","children":[
            {"id":"vision","name":"Computer Vision","children":[
                {"id":"segmentation","name":"Segmentation","keyword":"segmentation"},
                {"id":"detection","name":"Detection","keyword":"detection"}]},
            {"id":"nlp","name":"Language","children":[
                {"id":"parsing","name":"Parsing","keyword":"parser"},
                {"id":"translation","name":"Translation","keyword":"translation"}]}]}"#,
    )?;

    println!("root: {}", hierarchy.root());
    println!("leaves: {:?}", hierarchy.leaves());
    println!("internal nodes: {:?}", hierarchy.internal_nodes());
    for leaf in hierarchy.leaves() {
        println!(
            "  {leaf}: level {}, path {:?}",
            hierarchy.level(&leaf)?,
            hierarchy.path_to(&leaf)?
        );
    }
    println!("seed keywords: {:?}\n", hierarchy.leaf_keywords()?);

    let records = vec![
        record(
            "ada/mask-lab",
            "ada",
            "mask-lab",
            &["computer-vision"],
            "Instance segmentation models with mask heads for medical images",
        ),
        record(
            "ben/fast-parse",
            "ben",
            "fast-parse",
            &["nlp", "parser"],
            "A dependency parser; the parser is tuned for speed",
        ),
        record(
            "cas/yolo-zoo",
            "cas",
            "yolo-zoo",
            &["computer-vision", "detection"],
            "Pretrained object detection checkpoints",
        ),
    ];

    let tokenizer = TokenizerConfig::default();
    println!(
        "tokens of {:?}: {:?}\n",
        records[1].id,
        document_token_strings(&records[1], &tokenizer)
    );

    let corpus = build_corpus(records, &hierarchy, &tokenizer)?;
    println!(
        "{} repositories, vocabulary of {} tokens (document tokens + tags + name segments + seeds)",
        corpus.records.len(),
        corpus.vocab.len()
    );
    println!("mean document length: {:.1} tokens", corpus.mean_doc_len());
    println!("token               doc freq   corpus freq");
    for id in 0..corpus.vocab.len() as u32 {
        if corpus.vocab.doc_freq(id) >= 2 || corpus.vocab.corpus_freq(id) >= 2 {
            println!(
                "{:<20}{:>8}{:>14}",
                corpus.vocab.token(id),
                corpus.vocab.doc_freq(id),
                corpus.vocab.corpus_freq(id)
            );
        }
    }
    Ok(())
}
