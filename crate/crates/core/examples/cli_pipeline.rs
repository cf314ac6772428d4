//! Drive the subcommands from code: generate a synthetic corpus, train,
//! evaluate, and read back the manifest.

use kgzsl::cli::{execute, Command, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("kgzsl-cli-pipeline");
    let cfg = RunConfig::from_value(serde_json::json!({
        "profile": "synthetic",
        "synth": {"examples_per_class": 20},
        "optimizer": {"epochs": 2},
    }))?;
    execute(Command::Synth, &cfg, &dir.join("data"))?;
    let run = RunConfig::load(dir.join("data/run.json"))?;
    let out = dir.join("out");
    let train = execute(Command::Train, &run, &out)?;
    println!("train wrote {:?}", train.artifacts.keys().collect::<Vec<_>>());
    execute(Command::Eval, &run, &out)?;
    println!("{}", std::fs::read_to_string(out.join("metrics.json"))?);
    Ok(())
}
