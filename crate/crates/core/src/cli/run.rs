//! Subcommand driver. Every run writes its artifacts and a
//! `manifest-<command>.json` into the output directory, so `train` and
//! `eval` can share one directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EncoderBlock, HeadKind, RunConfig};
use super::{generate_synthetic, gradient_suite};
use crate::aggregators::{GnnStack, GraphContext};
use crate::autodiff::{seeded_rng, ParamStore};
use crate::encoders::{MentionInput, TokenSeq};
use crate::eval::{fold_metrics, Fold, FoldSpec};
use crate::kg::{ConceptTokenizer, EmbeddingTable, FeatureTable, Graph};
use crate::sampler::HitTables;
use crate::zeroshot::{evaluate, train_bilinear, train_l2, ClassSet, DevSet, Example, Input, PredictMode, ZslModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Ingest,
    Sample,
    Train,
    Eval,
    Gradcheck,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Sample => "sample",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Gradcheck => "gradcheck",
            Command::Synth => "synth",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    /// SHA-256 of every artifact, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
}

/// Process exit status for an error: 1 for bad configs or data, 2 for a
/// broken internal invariant.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Shape { .. } | Error::Contract(_) => 2,
        _ => 1,
    }
}

/// One line of an examples file. Which fields are read depends on the
/// configured encoder.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    /// Example vector for precomputed encoders, `v_f` for mentions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention_tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub left_tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub right_tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_ids: Vec<usize>,
}

impl ExampleRecord {
    pub fn from_example(x: &Example) -> Self {
        let mut r = ExampleRecord {
            labels: x.labels.clone(),
            ..Default::default()
        };
        if let [l] = x.labels.as_slice() {
            r.label = Some(l.clone());
            r.labels.clear();
        }
        match &x.input {
            Input::Vector(v) => r.features = Some(v.clone()),
            Input::Sentence(t) => r.tokens = Some(t.real().to_vec()),
            Input::Mention(m) => {
                r.mention_tokens = Some(m.mention.real().to_vec());
                r.left_tokens = m.left.real().to_vec();
                r.right_tokens = m.right.real().to_vec();
                r.features = m.features.clone();
                r.feature_ids = m.feature_ids.clone();
            }
        }
        r
    }

    fn into_example(self, encoder: &EncoderBlock) -> std::result::Result<Example, String> {
        let mut labels = self.labels;
        if let Some(l) = self.label {
            labels.insert(0, l);
        }
        if labels.is_empty() {
            return Err("example has no label".into());
        }
        let input = match *encoder {
            EncoderBlock::Precomputed { dim } => {
                let v = self.features.ok_or("precomputed encoder needs `features`")?;
                if v.len() != dim {
                    return Err(format!("`features` has {} components, encoder expects {dim}", v.len()));
                }
                Input::Vector(v)
            }
            EncoderBlock::Sentence { .. } => Input::Sentence(TokenSeq::new(&self.tokens.ok_or("sentence encoder needs `tokens`")?)),
            EncoderBlock::Mention { window, .. } => {
                let mention = self.mention_tokens.ok_or("mention encoder needs `mention_tokens`")?;
                let mut m = MentionInput::new(&mention, &self.left_tokens, &self.right_tokens, window);
                m.features = self.features;
                m.feature_ids = self.feature_ids;
                Input::Mention(m)
            }
        };
        Ok(Example { input, labels })
    }
}

pub fn read_examples(path: &Path, encoder: &EncoderBlock) -> Result<Vec<Example>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let parse = |msg: String| Error::Parse {
            source_name: name.clone(),
            line: i + 1,
            msg,
        };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        out.push(rec.into_example(encoder).map_err(parse)?);
    }
    Ok(out)
}

pub fn write_examples(path: &Path, xs: &[Example]) -> Result<()> {
    let mut s = String::new();
    for x in xs {
        s.push_str(&serde_json::to_string(&ExampleRecord::from_example(x))?);
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Collects artifacts and writes the manifest.
struct Output {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, data).map_err(|e| Error::io(&p, e))?;
        self.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(data)));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.bytes(name, s.as_bytes())
    }

    /// Registers a file written by someone else.
    fn record(&mut self, name: &str) -> Result<()> {
        let p = self.path(name);
        let data = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        self.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(data)));
        Ok(())
    }

    fn finish(self, command: Command, cfg: &RunConfig) -> Result<Manifest> {
        let m = Manifest {
            command,
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            config: cfg.clone(),
            artifacts: self.artifacts,
        };
        let p = self.dir.join(format!("manifest-{}.json", command.name()));
        let mut f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&p, e))?;
        Ok(m)
    }
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{what} is required for this command")))
}

fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    let path = cfg.resolve(require(&cfg.paths.graph, "graph")?);
    let g = Graph::ingest(&path, cfg.ingest.lang_filter.as_deref(), cfg.ingest.bidirectional)?;
    Ok(match &cfg.ingest.prefix_separator {
        Some(sep) if !sep.is_empty() => g.union_prefix(sep),
        _ => g,
    })
}

fn load_embeddings(cfg: &RunConfig) -> Result<Option<EmbeddingTable>> {
    cfg.paths
        .embeddings
        .as_ref()
        .map(|p| EmbeddingTable::load(cfg.resolve(p), cfg.ingest.oov_seed))
        .transpose()
}

fn load_features(cfg: &RunConfig, g: &Graph, emb: Option<&EmbeddingTable>) -> Result<FeatureTable> {
    let table = match (&cfg.paths.features, emb) {
        (Some(p), _) => FeatureTable::load(cfg.resolve(p))?,
        (None, Some(emb)) => FeatureTable::from_graph(g, emb, &ConceptTokenizer)?,
        (None, None) => return Err(Error::Config("node features need paths.features or paths.embeddings".into())),
    };
    table.covers(g)?;
    Ok(table)
}

/// Everything `train` and `eval` read.
struct Corpus {
    graph: Graph,
    features: FeatureTable,
    emb: Option<EmbeddingTable>,
    folds: FoldSpec,
    targets: Option<BTreeMap<String, Vec<f64>>>,
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let graph = load_graph(cfg)?;
    let emb = load_embeddings(cfg)?;
    if let Some(d) = cfg.model.encoder.word_dim() {
        let emb = emb
            .as_ref()
            .ok_or_else(|| Error::Config("word-level encoders need paths.embeddings".into()))?;
        if emb.dim() != d {
            return Err(Error::Config(format!("encoder input dim {d} but embeddings have dim {}", emb.dim())));
        }
    }
    let features = load_features(cfg, &graph, emb.as_ref())?;
    let folds = FoldSpec::load(cfg.resolve(require(&cfg.paths.folds, "folds")?))?;
    for class in folds.folds.iter().flat_map(|f| f.train.iter().chain(&f.dev).chain(&f.test)) {
        if !graph.contains(class) {
            return Err(Error::UnknownNode(class.clone()));
        }
    }
    let targets = match cfg.model.head {
        HeadKind::L2 => {
            let p = cfg.resolve(require(&cfg.paths.class_targets, "class_targets")?);
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Some(serde_json::from_str(&text)?)
        }
        HeadKind::Bilinear => None,
    };
    Ok(Corpus {
        graph,
        features,
        emb,
        folds,
        targets,
    })
}

fn build_model(cfg: &RunConfig, corpus: &Corpus) -> Result<ZslModel> {
    let gnn = GnnStack::new("gnn", cfg.model.gnn_config(corpus.features.dim())?, corpus.graph.relations())?;
    Ok(ZslModel::new(cfg.model.encoder.build(), gnn, cfg.model.rank))
}

fn within(x: &Example, classes: &BTreeSet<&str>) -> bool {
    x.labels.iter().all(|l| classes.contains(l.as_str()))
}

fn fold_examples(xs: &[Example], classes: &[String]) -> Vec<Example> {
    let set: BTreeSet<&str> = classes.iter().map(String::as_str).collect();
    xs.iter().filter(|x| within(x, &set)).cloned().collect()
}

fn dev_classes(fold: &Fold) -> &[String] {
    if fold.dev.is_empty() {
        &fold.train
    } else {
        &fold.dev
    }
}

#[derive(Serialize)]
struct FoldLog<'a> {
    fold: usize,
    best_epoch: usize,
    epochs: &'a [crate::zeroshot::EpochLog],
}

fn train(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let encoder = &cfg.model.encoder;
    let train_all = read_examples(&cfg.resolve(require(&cfg.paths.train_examples, "train_examples")?), encoder)?;
    let dev_all = match &cfg.paths.dev_examples {
        Some(p) => read_examples(&cfg.resolve(p), encoder)?,
        None => Vec::new(),
    };
    let model = build_model(cfg, &corpus)?;
    let tc = cfg.train_config();
    for (i, fold) in corpus.folds.folds.iter().enumerate() {
        let train_graph = corpus
            .graph
            .without_nodes(fold.test.iter().chain(&fold.dev).map(String::as_str));
        let dev_graph = corpus.graph.without_nodes(fold.test.iter().map(String::as_str));
        let train_hits = HitTables::compute(&train_graph, &cfg.walk())?;
        let ctx = GraphContext::new(&train_graph, &corpus.features, &train_hits);
        let dev_hits = match fold.dev.is_empty() {
            true => None,
            false => Some(HitTables::compute(&dev_graph, &cfg.walk())?),
        };
        let dev_ctx_own = dev_hits.as_ref().map(|h| GraphContext::new(&dev_graph, &corpus.features, h));
        let dev_ctx = dev_ctx_own.as_ref().unwrap_or(&ctx);
        let mut classes = ClassSet::new(&fold.train, &fold.test)?;
        let mut init = ParamStore::new();
        let (best, best_epoch, log) = match cfg.model.head {
            HeadKind::Bilinear => {
                model.init(&mut init, &mut seeded_rng(cfg.seed));
                let examples = fold_examples(&train_all, &fold.train);
                let dev_examples = fold_examples(&dev_all, dev_classes(fold));
                let dev = DevSet {
                    ctx: dev_ctx,
                    examples: &dev_examples,
                    classes: dev_classes(fold),
                };
                let o = train_bilinear(&model, &init, &ctx, corpus.emb.as_ref(), &examples, &classes, Some(dev), &tc)?;
                (o.best, o.best_epoch, o.log)
            }
            HeadKind::L2 => {
                model.gnn.init(&mut init, &mut seeded_rng(cfg.seed));
                classes = classes.with_targets(corpus.targets.clone().unwrap_or_default());
                let val = (!fold.dev.is_empty()).then_some((dev_ctx, fold.dev.as_slice()));
                let o = train_l2(&model.gnn, &init, &ctx, &classes, val, &tc)?;
                (o.best, o.best_epoch, o.log)
            }
        };
        info!("fold {i}: best epoch {best_epoch}");
        out.bytes(&format!("fold{i}.checkpoint.json"), best.to_json()?.as_bytes())?;
        out.json(
            &format!("fold{i}.log.json"),
            &FoldLog {
                fold: i,
                best_epoch,
                epochs: &log,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FoldPredictions {
    fold: usize,
    predictions: Vec<(Vec<String>, Vec<String>)>,
}

fn eval(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    for (i, f) in corpus.folds.folds.iter().enumerate() {
        if f.test.is_empty() {
            return Err(Error::Config(format!("fold {i} has an empty test class set")));
        }
    }
    let test_all = read_examples(
        &cfg.resolve(require(&cfg.paths.test_examples, "test_examples")?),
        &cfg.model.encoder,
    )?;
    let ckpt_dir = cfg
        .paths
        .checkpoint_dir
        .as_ref()
        .map(|p| cfg.resolve(p))
        .unwrap_or_else(|| out.dir.clone());
    let model = build_model(cfg, &corpus)?;
    let hits = HitTables::compute(&corpus.graph, &cfg.walk())?;
    let ctx = GraphContext::new(&corpus.graph, &corpus.features, &hits);
    let mode = match cfg.model.head {
        HeadKind::L2 => PredictMode::L2,
        HeadKind::Bilinear => cfg.model.loss.predict_mode(),
    };
    let mut results = Vec::new();
    let mut dumps = Vec::new();
    for (i, fold) in corpus.folds.folds.iter().enumerate() {
        let examples = fold_examples(&test_all, &fold.test);
        if examples.is_empty() {
            return Err(Error::Data(format!("fold {i} has no test examples")));
        }
        let store = ParamStore::load(ckpt_dir.join(format!("fold{i}.checkpoint.json")))?;
        let preds = evaluate(&model, &store, &ctx, corpus.emb.as_ref(), &examples, &fold.test, mode, cfg.seed)?;
        let pairs: Vec<(Vec<String>, Vec<String>)> = preds
            .iter()
            .zip(&examples)
            .map(|(p, x)| (p.labels(), x.labels.clone()))
            .collect();
        dumps.push(FoldPredictions {
            fold: i,
            predictions: pairs.clone(),
        });
        results.push(pairs);
    }
    let metrics = fold_metrics(&results)?;
    info!("micro {:.4}, macro {:.4}", metrics.micro, metrics.macro_);
    let mut text = metrics.to_json()?;
    text.push('\n');
    out.bytes("metrics.json", text.as_bytes())?;
    out.json("predictions.json", &dumps)
}

fn synth(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let data = generate_synthetic(&cfg.synth)?;
    info!("synthetic oracle accuracy {:.4}", data.oracle_accuracy);
    out.bytes("graph.tsv", data.graph.to_tsv_string().as_bytes())?;
    data.features.save(out.path("features.txt"))?;
    out.record("features.txt")?;
    for (name, xs) in [("train.jsonl", &data.train), ("dev.jsonl", &data.dev), ("test.jsonl", &data.test)] {
        write_examples(&out.path(name), xs)?;
        out.record(name)?;
    }
    out.json("folds.json", &data.folds)?;
    out.json(
        "synth.json",
        &serde_json::json!({
            "spec": cfg.synth,
            "classes": data.classes,
            "attributes": data.attributes,
            "oracle_accuracy": data.oracle_accuracy,
        }),
    )?;
    // a ready-to-train config pointing at the generated files
    let mut run = cfg.clone();
    run.paths = super::config::Paths {
        graph: Some("graph.tsv".into()),
        features: Some("features.txt".into()),
        train_examples: Some("train.jsonl".into()),
        dev_examples: Some("dev.jsonl".into()),
        test_examples: Some("test.jsonl".into()),
        folds: Some("folds.json".into()),
        ..Default::default()
    };
    run.ingest.bidirectional = false;
    run.model.encoder = EncoderBlock::Precomputed { dim: cfg.synth.dim };
    run.profile = super::config::Profile::Synthetic;
    out.json("run.json", &run)
}

/// Runs one subcommand, writing artifacts and the manifest into `out_dir`.
pub fn execute(command: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    let cfg = &cfg.resolved()?;
    cfg.validate()?;
    cfg.check_inputs()?;
    let mut out = Output::new(out_dir)?;
    info!("{} (seed {}, config {})", command.name(), cfg.seed, cfg.hash()?);
    match command {
        Command::Ingest => {
            let g = load_graph(cfg)?;
            info!("{} nodes, {} edges, {} relations", g.node_count(), g.edge_count(), g.relation_count());
            out.bytes("graph.tsv", g.to_tsv_string().as_bytes())?;
            if let Some(emb) = load_embeddings(cfg)? {
                FeatureTable::from_graph(&g, &emb, &ConceptTokenizer)?.save(out.path("features.txt"))?;
                out.record("features.txt")?;
            }
        }
        Command::Sample => {
            let g = load_graph(cfg)?;
            let hits = HitTables::compute(&g, &cfg.walk())?;
            out.json("hits.json", &hits.sorted())?;
        }
        Command::Train => train(cfg, &mut out)?,
        Command::Eval => eval(cfg, &mut out)?,
        Command::Gradcheck => {
            let seeds: Vec<u64> = (0..cfg.gradcheck.seeds as u64).map(|i| cfg.seed + i).collect();
            let report = gradient_suite(&seeds, &cfg.gradcheck_config())?;
            out.json("gradcheck.json", &report)?;
            if !report.passed {
                let names: Vec<String> = report.failures().map(|c| format!("{}/{}@{}", c.group, c.name, c.seed)).collect();
                out.finish(command, cfg)?;
                return Err(Error::Contract(format!("gradient check failed: {}", names.join(", "))));
            }
        }
        Command::Synth => synth(cfg, &mut out)?,
    }
    out.finish(command, cfg)
}
