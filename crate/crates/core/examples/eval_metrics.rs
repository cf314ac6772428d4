//! Strict accuracy, micro/macro averages over folds and top-k accuracy.

use kgzsl::eval::{fold_metrics, per_class_topk, strict_match};

fn labels(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn main() -> kgzsl::Result<()> {
    println!("strict {{person, artist}} vs {{artist, person}}: {}", strict_match(&["person", "artist"], &["artist", "person"]));
    println!("strict {{person}} vs {{person, artist}}: {}", strict_match(&["person"], &["person", "artist"]));

    let fold_a = vec![
        (labels(&["cat"]), labels(&["cat"])),
        (labels(&["dog"]), labels(&["dog"])),
        (labels(&["cat"]), labels(&["dog"])),
    ];
    let fold_b = vec![(labels(&["owl"]), labels(&["owl"]))];
    let r = fold_metrics(&vec![fold_a, fold_b])?;
    println!("{}", r.to_json()?);

    let ranked = vec![
        (vec!["cat", "dog", "owl"], "dog".to_string()),
        (vec!["owl", "cat", "dog"], "dog".to_string()),
        (vec!["owl", "dog", "cat"], "owl".to_string()),
    ];
    for k in [1, 2, 3] {
        println!("per-class top-{k}: {:.3}", per_class_topk(&ranked, k));
    }
    Ok(())
}
