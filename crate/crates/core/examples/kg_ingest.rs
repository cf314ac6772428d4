//! Ingest a small assertion file, union prefix variants and query a 2-hop
//! neighbourhood.

use std::io::Cursor;

use kgzsl::kg::{ConceptTokenizer, EmbeddingTable, FeatureTable, Graph, IngestOptions};

const ROWS: &str = "\
/r/IsA\t/c/en/dog/n\t/c/en/animal\ten
/r/IsA\t/c/en/dog\t/c/en/pet\ten
/r/HasA\t/c/en/animal\t/c/en/fur\ten
/r/IsA\t/c/fr/chien\t/c/fr/animal\tfr
";

fn main() -> kgzsl::Result<()> {
    let opts = IngestOptions {
        lang_filter: Some("en".into()),
        bidirectional: true,
    };
    let g = Graph::read_tsv(Cursor::new(ROWS), "inline", &opts)?;
    println!("ingested {} nodes, {} edges", g.node_count(), g.edge_count());

    // /c/en/dog/n and /c/en/dog collapse into one node
    let g = g.union_prefix("/");
    println!("after prefix union: {:?}", g.nodes());

    let hood = g.khop("/c/en/dog", 2)?;
    println!("2-hop of dog: {:?}", hood.nodes());

    let emb = EmbeddingTable::read(Cursor::new("dog 1 0 0\nanimal 0 1 0\npet 0 0 1\n"), "inline", 7)?;
    let feats = FeatureTable::from_graph(&g, &emb, &ConceptTokenizer)?;
    for n in g.nodes() {
        println!("{n:>14} -> {:.3?}", feats.get(n).unwrap());
    }
    print!("{}", g.to_tsv_string());
    Ok(())
}
