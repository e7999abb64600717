//! Building the word-centric heterogeneous network from a corpus.
//!
//! Every edge connects a word to a document, user, tag, name segment or
//! label, weighted by term frequency. The network is the input to the
//! embedding trainer and round-trips through a TSV dump.
//!
//!     cargo run --example build_hin

use repoclass::corpus::{build_corpus, LabelHierarchy, RepoRecord, TokenizerConfig};
use repoclass::hin::{build_hin, EdgeKind, HinGraph, NodeKind, NodeRef};

fn main() -> anyhow::Result<()> {
    let hierarchy = LabelHierarchy::from_json_str(
        r#"{"id":"root","name":"Root","children":[
            {"id":"games","name":"Games","keyword":"roguelike"},
            {"id":"audio","name":"Audio","keyword":"synthesizer"}]}"#,
    )?;
    let mut records = Vec::new();
    for (id, user, name, tags, text) in [
        ("kay/rusty-rogue", "kay", "rusty-rogue", vec!["game", "roguelike"],
         "a terminal roguelike dungeon crawler with procedural dungeon maps"),
        ("kay/dungeon-kit", "kay", "dungeon-kit", vec!["game"],
         "tile helpers for roguelike maps"),
        ("lee/wavebox", "lee", "wavebox", vec!["audio", "dsp"],
         "a modular synthesizer with wavetable oscillators"),
        ("lee/chirp", "lee", "chirp", vec!["audio"],
         "synthesizer envelopes and filters for chiptune music"),
    ] {
        records.push(RepoRecord {
            id: id.into(),
            user: user.into(),
            name: name.into(),
            tags: tags.into_iter().map(String::from).collect(),
            description: text.into(),
            readme: String::new(),
            gold_labels: None,
        });
    }

    let corpus = build_corpus(records, &hierarchy, &TokenizerConfig::default())?;
    let graph = build_hin(&corpus.records, &corpus.documents, &corpus.vocab, &hierarchy)?;

    println!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    for kind in [
        NodeKind::Word,
        NodeKind::Doc,
        NodeKind::User,
        NodeKind::Tag,
        NodeKind::NameToken,
        NodeKind::Label,
    ] {
        println!("  {:<6} {:>3}", kind.name(), graph.nodes_of_kind(kind).len());
    }

    let word = NodeRef::word("roguelike");
    println!("\nneighbors of word \"roguelike\":");
    for edge in EdgeKind::ALL {
        let neighbors = graph.neighbors(&word, edge)?;
        if neighbors.is_empty() {
            continue;
        }
        let listed: Vec<String> = neighbors
            .iter()
            .map(|(n, w)| format!("{n} (tf {w})"))
            .collect();
        println!("  {:<2} -> {}", edge.name(), listed.join(", "));
    }

    // The TSV dump is what the pipeline stores between stages.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("edges.tsv");
    graph.dump_edges(&path)?;
    let text = std::fs::read_to_string(&path)?;
    println!("\nfirst dump lines:");
    for line in text.lines().take(5) {
        println!("  {line}");
    }
    let reloaded = HinGraph::load_edges(&path)?;
    println!(
        "reloaded: {} nodes, {} edges (identical: {})",
        reloaded.node_count(),
        reloaded.edge_count(),
        reloaded.node_count() == graph.node_count() && reloaded.edge_count() == graph.edge_count()
    );
    Ok(())
}
