use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kgzsl::cli::{execute, exit_code, Command, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Ingest,
    Sample,
    Train,
    Eval,
    Gradcheck,
    Synth,
}

/// Inductive zero-shot learning over knowledge graphs.
///
/// Log verbosity comes from KGZSL_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "kgzsl", version)]
struct Args {
    command: Sub,
    /// Run config (JSON) or a manifest from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KGZSL_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let command = match args.command {
        Sub::Ingest => Command::Ingest,
        Sub::Sample => Command::Sample,
        Sub::Train => Command::Train,
        Sub::Eval => Command::Eval,
        Sub::Gradcheck => Command::Gradcheck,
        Sub::Synth => Command::Synth,
    };
    let run = RunConfig::load(&args.config).and_then(|cfg| {
        let cfg = match args.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        };
        execute(command, &cfg, &args.out)
    });
    match run {
        Ok(m) => {
            println!("{} done: {} artifacts in {}", command.name(), m.artifacts.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
