//! Scoring predicted label paths against gold paths.
//!
//! Micro metrics pool true/false positives over all classes; macro averages
//! per-class F1. Both are reported per hierarchy level and overall, which is
//! how partial credit works: a repository predicted into the right branch
//! but the wrong leaf still scores at level 1.
//!
//!     cargo run --example evaluate_predictions

use std::collections::BTreeMap;

use repoclass::corpus::LabelHierarchy;
use repoclass::eval::f1_report;

fn main() -> anyhow::Result<()> {
    let hierarchy = LabelHierarchy::from_json_str(
        r#"{"id":"root","name":"Root","children":[
            {"id":"art","name":"Art","children":[
                {"id":"paint","name":"Painting","keyword":"paint"},
                {"id":"music","name":"Music","keyword":"music"}]},
            {"id":"sci","name":"Science","children":[
                {"id":"bio","name":"Biology","keyword":"bio"},
                {"id":"phys","name":"Physics","keyword":"phys"}]}]}"#,
    )?;

    let paths = |pairs: &[(&str, &[&str])]| -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(id, path)| {
                (
                    id.to_string(),
                    path.iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect()
    };
    let gold = paths(&[
        ("r1", &["art", "paint"]),
        ("r2", &["art", "music"]),
        ("r3", &["sci", "bio"]),
        ("r4", &["sci", "phys"]),
        ("r5", &["sci"]),
        ("r6", &["art", "paint"]),
    ]);
    let predicted = paths(&[
        ("r1", &["art", "paint"]),
        ("r2", &["art", "paint"]),
        ("r3", &["art", "music"]),
        ("r4", &["sci"]),
        ("r5", &["sci", "bio"]),
        ("r6", &["sci", "phys"]),
    ]);

    let report = f1_report(&gold, &predicted, &hierarchy)?;
    println!("{}", report.format_table());

    let gate = 0.5;
    let failing = report.scopes_below(gate);
    if failing.is_empty() {
        println!("all scopes at or above micro F1 {gate}");
    } else {
        println!("scopes below micro F1 {gate}: {}", failing.join(", "));
    }
    Ok(())
}
