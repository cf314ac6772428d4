//! Run every aggregator kind on the same node and neighbour set, and show
//! that the set aggregators ignore neighbour order.

use kgzsl::aggregators::{seeded_permutation, AggregatorKind, AggregatorLayer, LayerConfig, NeighborInput, SequenceOrder};
use kgzsl::autodiff::{seeded_rng, Binder, ParamStore, Tape};

fn main() -> kgzsl::Result<()> {
    let me = [0.2, -0.4, 0.9, 0.1];
    let nbrs: Vec<(Vec<f64>, &str)> = vec![
        (vec![1.0, 0.0, 0.5, -0.5], "is_a"),
        (vec![0.0, 1.0, -0.5, 0.5], "has"),
        (vec![0.3, 0.3, 0.3, 0.3], "is_a"),
    ];
    let kinds = [
        AggregatorKind::Gcn,
        AggregatorKind::Gat,
        AggregatorKind::Rgcn,
        AggregatorKind::Lstm,
        AggregatorKind::Transformer,
    ];
    for kind in kinds {
        let layer = AggregatorLayer::new("agg", LayerConfig::new(kind, 4, 3), vec!["is_a".into(), "has".into()])?;
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut seeded_rng(3));
        let run = |order: &[usize]| -> kgzsl::Result<Vec<f64>> {
            let tape = Tape::new();
            let b = Binder::new(&tape, &store);
            let inputs: Vec<_> = order
                .iter()
                .map(|&i| NeighborInput::with_relations(b.vector(&nbrs[i].0), &[nbrs[i].1]))
                .collect();
            Ok(layer.forward(&b, b.vector(&me), &inputs, SequenceOrder::Seeded(0))?.data())
        };
        let a = run(&[0, 1, 2])?;
        let p = run(&seeded_permutation(3, 9))?;
        println!("{:<12} {a:+.4?}  order invariant: {}", kind.name(), a == p);
    }
    Ok(())
}
