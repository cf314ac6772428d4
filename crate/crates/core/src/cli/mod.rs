//! Command-line runs: configs, the synthetic benchmark and the subcommand
//! driver behind the `kgzsl` binary.

mod config;
mod experiment;
mod run;
mod suite;
mod synth;

pub use config::{
    EncoderBlock, GradCheckBlock, HeadKind, IngestBlock, ModelBlock, OptimizerBlock, Paths, Profile, RunConfig,
    SamplerBlock,
};
pub use experiment::{run_synthetic, SynthRun};
pub use run::{execute, exit_code, read_examples, write_examples, Command, ExampleRecord, Manifest};
pub use suite::{gradient_suite, SuiteCase, SuiteReport};
pub use synth::{
    attribute_id, class_id, generate_synthetic, nearest_prototype, SynthData, SynthSpec, HAS_ATTRIBUTE,
    LACKS_ATTRIBUTE,
};
