//! Compare aggregators on the synthetic benchmark through the run-config
//! layer, including the relation-structure variant.
//!
//! `cargo run --release --example synthetic_benchmark -- 3` runs three seeds.

use kgzsl::aggregators::AggregatorKind;
use kgzsl::cli::{generate_synthetic, run_synthetic, RunConfig, SynthSpec};

fn main() -> kgzsl::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for relation_structure in [false, true] {
        println!("relation_structure = {relation_structure}");
        for kind in [AggregatorKind::Gcn, AggregatorKind::Gat, AggregatorKind::Rgcn, AggregatorKind::Lstm, AggregatorKind::Transformer] {
            let mut accs = Vec::new();
            for seed in 0..seeds {
                let cfg = RunConfig::from_value(serde_json::json!({
                    "profile": "synthetic",
                    "seed": seed,
                    "model": {"aggregator": kind.name()},
                    "optimizer": {"epochs": 3},
                }))?;
                let data = generate_synthetic(&SynthSpec { relation_structure, seed, ..cfg.synth.clone() })?;
                let gnn = cfg.model.gnn_config(data.features.dim())?;
                accs.push(run_synthetic(&data, gnn, cfg.model.rank, cfg.walk(), &cfg.train_config())?.accuracy);
            }
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            println!("  {:<12} mean unseen top-1 {mean:.3}  {accs:.3?}", kind.name());
        }
    }
    Ok(())
}
