//! Expanding seed keywords into mutually exclusive keyword sets.
//!
//! Each class repeatedly takes the candidate closest to its original seed;
//! the first time two sets share a word, expansion stops and every class
//! drops its newest word. The planted 2-D geometry below makes each round
//! easy to follow by hand.
//!
//!     cargo run --example enrich_keywords

use std::collections::{BTreeMap, BTreeSet};

use repoclass::enrich::keyword_enrich;

fn main() -> anyhow::Result<()> {
    // Tokens placed on the unit circle: the "a" words cluster near 0 deg,
    // the "b" words near 180 deg, and "adrift" sits in between at 170 deg
    // where both classes will eventually want it.
    let placed: [(&str, f64); 6] = [
        ("anchor", 0.0),
        ("abeam", 5.0),
        ("aloft", 10.0),
        ("adrift", 170.0),
        ("bosun", 175.0),
        ("binnacle", 180.0),
    ];
    let vectors: BTreeMap<String, Vec<f64>> = placed
        .iter()
        .map(|(token, deg)| {
            let rad = deg.to_radians();
            (token.to_string(), vec![rad.cos(), rad.sin()])
        })
        .collect();
    for (token, deg) in placed {
        println!("  {token:<9} at {deg:>5.0} deg");
    }

    let seeds: BTreeMap<String, String> = [
        ("alpha".to_string(), "anchor".to_string()),
        ("bravo".to_string(), "binnacle".to_string()),
    ]
    .into();
    let candidates: BTreeSet<String> = vectors.keys().cloned().collect();

    let sets = keyword_enrich(&seeds, &vectors, &candidates, 100)?;
    println!("\n{}", sets.format_table());
    println!(
        "Round 1 added abeam and bosun, round 2 aloft and adrift. In round 3\n\
         each class reached across the circle for a word the other already\n\
         held, so that round was rolled back and the lists stay disjoint."
    );

    // A single class can never collide, so the cap bounds its expansion.
    let solo: BTreeMap<String, String> =
        [("alpha".to_string(), "anchor".to_string())].into();
    let capped = keyword_enrich(&solo, &vectors, &candidates, 4)?;
    println!("single class with cap 4:\n{}", capped.format_table());
    Ok(())
}
