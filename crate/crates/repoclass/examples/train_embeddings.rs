//! Training network embeddings and inspecting the learned geometry.
//!
//! Two groups of words co-occur only within their group, so training pulls
//! each group together and pushes the groups apart. The held-out loss trace
//! shows optimization progress; cosine similarities show the result.
//!
//!     cargo run --example train_embeddings

use repoclass::corpus::{build_corpus, LabelHierarchy, RepoRecord, TokenizerConfig};
use repoclass::embedding::{export_word_vectors, train, TrainConfig};
use repoclass::hin::build_hin;

fn main() -> anyhow::Result<()> {
    let group_a: Vec<String> = (0..5).map(|i| format!("quartz{i}")).collect();
    let group_b: Vec<String> = (0..5).map(|i| format!("maple{i}")).collect();
    let mut records = Vec::new();
    for r in 0..10 {
        let (group, user) = if r % 2 == 0 {
            (&group_a, format!("ua{}", r % 4))
        } else {
            (&group_b, format!("ub{}", r % 4))
        };
        records.push(RepoRecord {
            id: format!("r{r}"),
            user,
            name: format!("repo-r{r}"),
            tags: vec![],
            description: group.join(" "),
            readme: String::new(),
            gold_labels: None,
        });
    }
    let hierarchy = LabelHierarchy::from_json_str(
        r#"{"id":"root","name":"R","children":[
            {"id":"a","name":"A","keyword":"quartz0"},
            {"id":"b","name":"B","keyword":"maple0"}]}"#,
    )?;
    let corpus = build_corpus(records, &hierarchy, &TokenizerConfig::default())?;
    let graph = build_hin(&corpus.records, &corpus.documents, &corpus.vocab, &hierarchy)?;

    let config = TrainConfig {
        dim: 8,
        samples_per_edge: 300.0,
        ..TrainConfig::default()
    };
    println!(
        "training {}-dimensional embeddings over {} edges...",
        config.dim,
        graph.edge_count()
    );
    let (table, stats) = train(&graph, &config)?;

    println!("held-out loss after each tenth of training:");
    let trace: Vec<String> = stats.heldout_loss.iter().map(|l| format!("{l:.3}")).collect();
    println!("  {}", trace.join(" -> "));
    if !stats.skipped_paths.is_empty() {
        let skipped: Vec<&str> = stats.skipped_paths.iter().map(|p| p.name()).collect();
        println!("meta-paths without instances (skipped): {}", skipped.join(", "));
    }

    let vectors = table.word_vectors();
    let cos = |a: &str, b: &str| -> f64 {
        vectors[a].iter().zip(&vectors[b]).map(|(x, y)| x * y).sum()
    };
    println!("\ncosine similarities (unit vectors, so dot = cosine):");
    for (a, b) in [
        ("quartz0", "quartz1"),
        ("quartz0", "quartz4"),
        ("maple0", "maple3"),
        ("quartz0", "maple0"),
        ("quartz2", "maple4"),
    ] {
        println!("  {a:<8} ~ {b:<8} {:+.3}", cos(a, b));
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("embedding.tsv");
    export_word_vectors(&table, &path)?;
    let text = std::fs::read_to_string(&path)?;
    println!("\nexported table starts with:");
    for line in text.lines().take(3) {
        let shown: String = line.chars().take(72).collect();
        println!("  {shown}...");
    }
    Ok(())
}
