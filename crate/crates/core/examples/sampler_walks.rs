//! Random-walk hit tables and top-N neighbour truncation.

use kgzsl::kg::Graph;
use kgzsl::sampler::{hit_table, simulate_walks, WalkConfig};

fn main() -> kgzsl::Result<()> {
    let mut b = Graph::builder();
    for (h, t) in [("hub", "a"), ("hub", "b"), ("hub", "c"), ("a", "b"), ("c", "d"), ("d", "e")] {
        b.add_edge(h, "link", t);
    }
    let g = b.build();
    let cfg = WalkConfig {
        steps: 20,
        restarts: 2000,
        seed: 1,
    };
    let counts = simulate_walks(&g, "hub", &cfg)?;
    println!("visit counts from hub: {counts:?}");

    let table = hit_table(&g, "hub", &cfg)?;
    for e in &table.probs {
        println!("  {:>3}  p = {:.4}", e.id, e.p);
    }
    println!("top 2: {:?}", table.top_n(2));
    Ok(())
}
