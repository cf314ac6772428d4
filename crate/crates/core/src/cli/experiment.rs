use crate::aggregators::{GnnConfig, GnnStack, GraphContext};
use crate::autodiff::{seeded_rng, ParamStore};
use crate::sampler::{HitTables, WalkConfig};
use crate::zeroshot::{evaluate, train_bilinear, DevSet, ExampleEncoder, PredictMode, TrainConfig, TrainOutcome, ZslModel};
use crate::Result;

use super::SynthData;

#[derive(Debug, Clone)]
pub struct SynthRun {
    pub model: ZslModel,
    pub init: ParamStore,
    pub outcome: TrainOutcome,
    /// Top-1 accuracy on unseen-class test examples.
    pub accuracy: f64,
}

/// Trains on the seen classes of `data` over the graph without unseen
/// class nodes, then ranks the unseen classes on the full graph.
pub fn run_synthetic(data: &SynthData, gnn: GnnConfig, rank: usize, walk: WalkConfig, train: &TrainConfig) -> Result<SynthRun> {
    let unseen = &data.classes.unseen;
    let train_graph = data.graph.without_nodes(unseen.iter().map(String::as_str));
    let train_hits = HitTables::compute(&train_graph, &walk)?;
    let train_ctx = GraphContext::new(&train_graph, &data.features, &train_hits);

    let stack = GnnStack::new("gnn", gnn, data.graph.relations())?;
    let model = ZslModel::new(ExampleEncoder::Precomputed { dim: data.features.dim() }, stack, rank);
    let mut init = ParamStore::new();
    model.init(&mut init, &mut seeded_rng(train.seed));

    let dev = DevSet {
        ctx: &train_ctx,
        examples: &data.dev,
        classes: &data.classes.seen,
    };
    let outcome = train_bilinear(&model, &init, &train_ctx, None, &data.train, &data.classes, Some(dev), train)?;

    let hits = HitTables::compute(&data.graph, &walk)?;
    let ctx = GraphContext::new(&data.graph, &data.features, &hits);
    let preds = evaluate(&model, &outcome.best, &ctx, None, &data.test, unseen, PredictMode::Multiclass, train.seed)?;
    let correct = preds
        .iter()
        .zip(&data.test)
        .filter(|(p, x)| p.labels() == x.labels)
        .count();
    Ok(SynthRun {
        accuracy: correct as f64 / data.test.len() as f64,
        model,
        init,
        outcome,
    })
}
