//! Run configuration.
//!
//! A config file names a task profile and overrides any subset of fields.
//! Loading expands the profile's defaults, merges the file over them and
//! rejects unknown keys, so the expanded config enumerates every setting
//! that affects a run. Relative paths resolve against the config file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::SynthSpec;
use crate::aggregators::{AggregatorKind, GnnConfig, LayerConfig};
use crate::autodiff::{AdamConfig, GradCheckConfig};
use crate::encoders::{AttentiveNer, BiLstmAttention, FeatureMode};
use crate::nn::Activation;
use crate::sampler::{WalkConfig, DEFAULT_HOP_LIMITS, DEFAULT_RESTARTS, DEFAULT_STEPS};
use crate::zeroshot::{ExampleEncoder, LossMode, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Intent,
    Typing,
    Vision,
    Synthetic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Assertion file, `relation \t head \t tail [\t language]`.
    pub graph: Option<PathBuf>,
    /// Word vectors for node names and example tokens.
    pub embeddings: Option<PathBuf>,
    /// Node feature table; takes precedence over averaged name embeddings.
    pub features: Option<PathBuf>,
    pub train_examples: Option<PathBuf>,
    pub dev_examples: Option<PathBuf>,
    pub test_examples: Option<PathBuf>,
    pub folds: Option<PathBuf>,
    /// JSON object of class id to target vector, for the L2 head.
    pub class_targets: Option<PathBuf>,
    /// Where `eval` reads checkpoints; defaults to the output directory.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestBlock {
    pub lang_filter: Option<String>,
    pub bidirectional: bool,
    /// Merge nodes into existing prefix nodes at this separator.
    pub prefix_separator: Option<String>,
    /// Seed for out-of-vocabulary word vectors.
    pub oov_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Bilinear,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EncoderBlock {
    Precomputed {
        dim: usize,
    },
    Sentence {
        input: usize,
        hidden: usize,
        attention: usize,
    },
    Mention {
        input: usize,
        hidden: usize,
        attention: usize,
        window: usize,
        features: FeatureMode,
    },
}

impl EncoderBlock {
    pub fn build(&self) -> ExampleEncoder {
        match *self {
            EncoderBlock::Precomputed { dim } => ExampleEncoder::Precomputed { dim },
            EncoderBlock::Sentence { input, hidden, attention } => {
                ExampleEncoder::Sentence(BiLstmAttention::new("enc", input, hidden, attention))
            }
            EncoderBlock::Mention {
                input,
                hidden,
                attention,
                features,
                ..
            } => ExampleEncoder::Mention(AttentiveNer::new("enc", input, hidden, attention, features)),
        }
    }

    /// Word-vector dimension the encoder reads, if it reads words.
    pub fn word_dim(&self) -> Option<usize> {
        match *self {
            EncoderBlock::Precomputed { .. } => None,
            EncoderBlock::Sentence { input, .. } | EncoderBlock::Mention { input, .. } => Some(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub aggregator: AggregatorKind,
    /// Output dim of each GNN layer; the input dim is the node feature dim.
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub hop_limits: Vec<usize>,
    pub bases: usize,
    pub self_concat: bool,
    pub head: HeadKind,
    /// Low-rank dim `h` of the bilinear head.
    pub rank: usize,
    pub loss: LossMode,
    pub encoder: EncoderBlock,
}

impl ModelBlock {
    pub fn gnn_config(&self, in_dim: usize) -> Result<GnnConfig> {
        let mut dims = vec![in_dim];
        dims.extend(&self.dims);
        let layers = dims
            .windows(2)
            .map(|w| {
                LayerConfig::new(self.aggregator, w[0], w[1])
                    .with_activation(self.activation)
                    .with_bases(self.bases)
                    .with_self_concat(self.self_concat)
            })
            .collect();
        let cfg = GnnConfig {
            layers,
            hop_limits: self.hop_limits.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBlock {
    pub steps: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckBlock {
    pub step: f64,
    pub tol: f64,
    pub floor: f64,
    /// Seeds are `seed, seed + 1, ...`.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub paths: Paths,
    pub ingest: IngestBlock,
    pub model: ModelBlock,
    pub optimizer: OptimizerBlock,
    pub sampler: SamplerBlock,
    /// Generator spec for `synth`; its seed always equals the run seed.
    pub synth: SynthSpec,
    pub gradcheck: GradCheckBlock,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn encoder_default(profile: Profile) -> EncoderBlock {
    match profile {
        Profile::Intent => EncoderBlock::Sentence {
            input: 300,
            hidden: 32,
            attention: 20,
        },
        Profile::Typing => EncoderBlock::Mention {
            input: 300,
            hidden: 100,
            attention: 100,
            window: 10,
            features: FeatureMode::default(),
        },
        // pooled image features with a constant 1 appended, matching the
        // 2049-wide class vectors (classifier weights and bias)
        Profile::Vision => EncoderBlock::Precomputed { dim: 2049 },
        Profile::Synthetic => EncoderBlock::Precomputed {
            dim: SynthSpec::default().dim,
        },
    }
}

impl RunConfig {
    /// Fully expanded defaults of a profile. The intent profile's weight
    /// decay depends on the aggregator.
    pub fn profile_defaults(profile: Profile, aggregator: AggregatorKind) -> Self {
        let (dims, activation, head, rank, loss, bases) = match profile {
            Profile::Intent => (vec![64, 64], Activation::Relu, HeadKind::Bilinear, 16, LossMode::Multiclass, 10),
            Profile::Typing => (vec![128, 128], Activation::Relu, HeadKind::Bilinear, 20, LossMode::Multilabel, 1),
            Profile::Vision => (vec![2048, 2049], Activation::LeakyRelu, HeadKind::L2, 16, LossMode::Multiclass, 1),
            Profile::Synthetic => (vec![32, 32], Activation::LeakyRelu, HeadKind::Bilinear, 16, LossMode::Multiclass, 1),
        };
        let (weight_decay, epochs, batch_size) = match profile {
            Profile::Intent if aggregator == AggregatorKind::Transformer => (1e-5, 10, 32),
            Profile::Intent => (5e-5, 10, 32),
            Profile::Typing => (1e-5, 5, 32),
            Profile::Vision => (5e-4, 1000, 1000),
            Profile::Synthetic => (5e-5, 10, 32),
        };
        let adam = AdamConfig::default();
        let gc = GradCheckConfig::default();
        let hop_limits = DEFAULT_HOP_LIMITS.iter().copied().cycle().take(dims.len()).collect();
        Self {
            profile,
            seed: 0,
            paths: Paths::default(),
            ingest: IngestBlock {
                lang_filter: None,
                bidirectional: true,
                prefix_separator: None,
                oov_seed: 0,
            },
            model: ModelBlock {
                aggregator,
                dims,
                activation,
                hop_limits,
                bases,
                self_concat: aggregator.default_self_concat(),
                head,
                rank,
                loss,
                encoder: encoder_default(profile),
            },
            optimizer: OptimizerBlock {
                lr: adam.lr,
                beta1: adam.beta1,
                beta2: adam.beta2,
                eps: adam.eps,
                weight_decay,
                epochs,
                batch_size,
            },
            sampler: SamplerBlock {
                steps: DEFAULT_STEPS,
                restarts: DEFAULT_RESTARTS,
            },
            synth: SynthSpec::default(),
            gradcheck: GradCheckBlock {
                step: gc.step,
                tol: gc.tol,
                floor: gc.floor,
                seeds: 3,
            },
            base_dir: PathBuf::new(),
        }
    }

    /// Expands `user` (a possibly partial config object) over its profile's
    /// defaults. `profile` is required; `model.aggregator` defaults to the
    /// transformer.
    pub fn from_value(user: Value) -> Result<Self> {
        let obj = user
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let profile: Profile = match obj.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| Error::Config(format!("profile: {e}")))?,
            None => return Err(Error::Config("config needs a `profile`".into())),
        };
        let aggregator = match obj.get("model").and_then(|m| m.get("aggregator")) {
            Some(a) => serde_json::from_value(a.clone()).map_err(|e| Error::Config(format!("model.aggregator: {e}")))?,
            None => AggregatorKind::Transformer,
        };
        let mut merged = serde_json::to_value(Self::profile_defaults(profile, aggregator))?;
        merge(&mut merged, user);
        let mut cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.synth.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(v)
    }

    /// Reads a config file, or the config echoed in a run manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: not valid JSON: {e}", path.display())))?;
        let v = match v {
            Value::Object(mut m) if m.contains_key("config_hash") => m.remove("config").unwrap_or(Value::Null),
            v => v,
        };
        let mut cfg = Self::from_value(v)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self
    }

    /// Dimension and range checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.dims.is_empty() || m.dims.contains(&0) {
            return Err(Error::Config("model.dims must be non-empty and positive".into()));
        }
        if m.hop_limits.len() != m.dims.len() {
            return Err(Error::Config(format!(
                "model.hop_limits has {} entries for {} layers",
                m.hop_limits.len(),
                m.dims.len()
            )));
        }
        if m.rank == 0 || m.bases == 0 {
            return Err(Error::Config("model.rank and model.bases must be positive".into()));
        }
        let out = *m.dims.last().expect("non-empty");
        if m.head == HeadKind::L2 && m.encoder.build().out_dim() != out {
            return Err(Error::Config(format!(
                "L2 head compares example vectors of dim {} with class vectors of dim {out}",
                m.encoder.build().out_dim()
            )));
        }
        if let EncoderBlock::Mention { window: 0, .. } = m.encoder {
            return Err(Error::Config("mention window must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || o.weight_decay < 0.0 || o.epochs == 0 || o.batch_size == 0 {
            return Err(Error::Config(
                "optimizer needs lr > 0, weight_decay >= 0 and positive epochs and batch size".into(),
            ));
        }
        self.walk().validate()?;
        self.synth.validate()?;
        if self.gradcheck.seeds == 0 {
            return Err(Error::Config("gradcheck.seeds must be positive".into()));
        }
        Ok(())
    }

    /// Resolves a configured path against the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Copy with every path made absolute, so the config can be replayed
    /// from anywhere.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let abs = |p: &mut Option<PathBuf>| -> Result<()> {
            if let Some(path) = p {
                let full = self.resolve(path);
                *path = std::path::absolute(&full).map_err(|e| Error::io(full, e))?;
            }
            Ok(())
        };
        let p = &mut c.paths;
        for slot in [
            &mut p.graph,
            &mut p.embeddings,
            &mut p.features,
            &mut p.train_examples,
            &mut p.dev_examples,
            &mut p.test_examples,
            &mut p.folds,
            &mut p.class_targets,
            &mut p.checkpoint_dir,
        ] {
            abs(slot)?;
        }
        c.base_dir = PathBuf::new();
        Ok(c)
    }

    /// Errors naming the first configured input that does not exist.
    pub fn check_inputs(&self) -> Result<()> {
        let p = &self.paths;
        let inputs = [
            &p.graph,
            &p.embeddings,
            &p.features,
            &p.train_examples,
            &p.dev_examples,
            &p.test_examples,
            &p.folds,
            &p.class_targets,
        ];
        for path in inputs.into_iter().flatten() {
            let full = self.resolve(path);
            if !full.exists() {
                return Err(Error::io(full, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
            }
        }
        Ok(())
    }

    pub fn walk(&self) -> WalkConfig {
        WalkConfig {
            steps: self.sampler.steps,
            restarts: self.sampler.restarts,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let o = &self.optimizer;
        TrainConfig {
            epochs: o.epochs,
            batch_size: o.batch_size,
            adam: AdamConfig {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
            },
            loss: self.model.loss,
            seed: self.seed,
        }
    }

    pub fn gradcheck_config(&self) -> GradCheckConfig {
        GradCheckConfig {
            step: self.gradcheck.step,
            tol: self.gradcheck.tol,
            floor: self.gradcheck.floor,
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact expanded config.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_string(self)?.as_bytes())))
    }
}

/// Objects merge key by key. A tagged object whose tag changes is replaced
/// whole, so switching an encoder kind drops the old kind's fields.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            if tag_changed(b, &o) {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn tag_changed(base: &Map<String, Value>, over: &Map<String, Value>) -> bool {
    ["kind", "source"]
        .iter()
        .any(|t| matches!((base.get(*t), over.get(*t)), (Some(a), Some(b)) if a != b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn intent_profile_populates_table_defaults() {
        let c = RunConfig::from_value(json!({"profile": "intent"})).unwrap();
        assert_eq!(c.model.dims, [64, 64]);
        assert_eq!(c.optimizer.lr, 0.001);
        assert_eq!(c.optimizer.epochs, 10);
        assert_eq!(c.model.rank, 16);
        assert_eq!(c.model.bases, 10);
        assert_eq!(
            c.model.encoder,
            EncoderBlock::Sentence {
                input: 300,
                hidden: 32,
                attention: 20
            }
        );
        assert_eq!(c.optimizer.weight_decay, 1e-5);
        let lstm = RunConfig::from_value(json!({"profile": "intent", "model": {"aggregator": "lstm"}})).unwrap();
        assert_eq!(lstm.optimizer.weight_decay, 5e-5);
        assert!(lstm.model.self_concat);
    }

    #[test]
    fn other_profiles() {
        let t = RunConfig::from_value(json!({"profile": "typing"})).unwrap();
        assert_eq!((t.model.dims.clone(), t.optimizer.epochs, t.model.rank), (vec![128, 128], 5, 20));
        assert_eq!(t.model.loss, LossMode::Multilabel);
        let v = RunConfig::from_value(json!({"profile": "vision"})).unwrap();
        assert_eq!(v.model.dims, [2048, 2049]);
        assert_eq!(v.model.activation, Activation::LeakyRelu);
        assert_eq!(v.optimizer.weight_decay, 5e-4);
        assert_eq!(v.model.head, HeadKind::L2);
    }

    #[test]
    fn partial_override_keeps_siblings() {
        let c = RunConfig::from_value(json!({"profile": "synthetic", "optimizer": {"epochs": 3}, "seed": 9})).unwrap();
        assert_eq!(c.optimizer.epochs, 3);
        assert_eq!(c.optimizer.batch_size, 32);
        assert_eq!(c.synth.seed, 9);
    }

    #[test]
    fn switching_encoder_kind_replaces_block() {
        let c = RunConfig::from_value(json!({
            "profile": "intent",
            "model": {"encoder": {"kind": "precomputed", "dim": 8}}
        }))
        .unwrap();
        assert_eq!(c.model.encoder, EncoderBlock::Precomputed { dim: 8 });
    }

    #[test]
    fn unknown_keys_and_bad_dims_are_config_errors() {
        let typo = RunConfig::from_value(json!({"profile": "intent", "optimiser": {}}));
        assert!(matches!(typo, Err(Error::Config(_))));
        let hops = RunConfig::from_value(json!({"profile": "intent", "model": {"hop_limits": [5]}}));
        assert!(matches!(hops, Err(Error::Config(_))));
        let l2 = RunConfig::from_value(json!({"profile": "vision", "model": {"dims": [2048, 100]}}));
        assert!(matches!(l2, Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_value(json!({})), Err(Error::Config(_))));
    }

    #[test]
    fn expansion_round_trips_and_hash_is_stable() {
        let c = RunConfig::from_value(json!({"profile": "synthetic"})).unwrap();
        let again = RunConfig::from_json(&c.to_json_pretty().unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash().unwrap(), again.hash().unwrap());
        assert_ne!(c.hash().unwrap(), c.clone().with_seed(1).hash().unwrap());
    }

    #[test]
    fn missing_input_names_path() {
        let mut c = RunConfig::from_value(json!({"profile": "synthetic"})).unwrap();
        c.paths.graph = Some("/nonexistent/graph.tsv".into());
        let e = c.check_inputs().unwrap_err();
        assert!(e.to_string().contains("/nonexistent/graph.tsv"), "{e}");
    }
}
