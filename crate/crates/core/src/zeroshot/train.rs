use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{predict, ClassSet, Example, PredictMode, Prediction, ZslModel};
use crate::aggregators::{GnnStack, GraphContext, Mode};
use crate::autodiff::{seeded_rng, stack, Adam, AdamConfig, Binder, ParamStore, Tape, Var};
use crate::kg::EmbeddingTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Softmax cross-entropy; every example has exactly one label.
    Multiclass,
    /// Per-class sigmoid binary cross-entropy.
    Multilabel,
}

impl LossMode {
    pub fn predict_mode(self) -> PredictMode {
        match self {
            LossMode::Multiclass => PredictMode::Multiclass,
            LossMode::Multilabel => PredictMode::Multilabel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: LossMode::Multiclass,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Held-out examples scored against their own candidate classes.
#[derive(Clone, Copy)]
pub struct DevSet<'a> {
    pub ctx: &'a GraphContext<'a>,
    pub examples: &'a [Example],
    pub classes: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest dev loss, or after the
    /// last epoch when there is no dev set.
    pub best: ParamStore,
    pub best_epoch: usize,
    pub last: ParamStore,
    pub log: Vec<EpochLog>,
}

fn label_indices(examples: &[Example], classes: &[String], mode: LossMode, what: &str) -> Result<Vec<Vec<usize>>> {
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    examples
        .iter()
        .enumerate()
        .map(|(n, x)| {
            if mode == LossMode::Multiclass && x.labels.len() != 1 {
                return Err(Error::Data(format!(
                    "{what} example {n} has {} labels; multiclass needs exactly one",
                    x.labels.len()
                )));
            }
            x.labels
                .iter()
                .map(|l| {
                    index.get(l.as_str()).copied().ok_or_else(|| {
                        Error::Data(format!("{what} example {n} has label `{l}` outside its class set"))
                    })
                })
                .collect()
        })
        .collect()
}

fn example_loss<'t>(scores: Var<'t>, labels: &[usize], mode: LossMode) -> Result<Var<'t>> {
    match mode {
        LossMode::Multiclass => scores.cross_entropy(labels[0]),
        LossMode::Multilabel => {
            let mut y = vec![0.0; scores.shape()[0]];
            for &l in labels {
                y[l] = 1.0;
            }
            scores.binary_cross_entropy(&y)
        }
    }
}

/// Summed loss of `examples` against class vectors `phis`.
#[allow(clippy::too_many_arguments)]
fn batch_loss<'t>(
    model: &ZslModel,
    b: &Binder<'t, '_>,
    emb: Option<&EmbeddingTable>,
    phis: Var<'t>,
    examples: &[&Example],
    labels: &[&Vec<usize>],
    mode: LossMode,
) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for (x, y) in examples.iter().zip(labels) {
        let theta = model.encoder.encode(b, emb, &x.input)?;
        let l = example_loss(model.head.scores(b, theta, phis)?, y, mode)?;
        total = Some(match total {
            Some(t) => t.add(l)?,
            None => l,
        });
    }
    total.ok_or_else(|| Error::Contract("empty batch".into()))
}

fn dev_loss(model: &ZslModel, store: &ParamStore, emb: Option<&EmbeddingTable>, dev: &DevSet<'_>, labels: &[Vec<usize>], mode: LossMode, seed: u64) -> Result<f64> {
    let tape = Tape::new();
    let b = Binder::new(&tape, store);
    let ids: Vec<&str> = dev.classes.iter().map(String::as_str).collect();
    let phis = stack(&model.gnn.forward_many(&b, dev.ctx, &ids, Mode::Eval(seed))?)?;
    let xs: Vec<&Example> = dev.examples.iter().collect();
    let ys: Vec<&Vec<usize>> = labels.iter().collect();
    Ok(batch_loss(model, &b, emb, phis, &xs, &ys, mode)?.item() / xs.len() as f64)
}

/// Trains encoder, GNN and head jointly on seen-class examples.
///
/// Each epoch shuffles the training set and takes one Adam step per
/// mini-batch on the mean batch loss. Class vectors for all seen classes are
/// recomputed on every batch with a fresh LSTM order seed.
#[allow(clippy::too_many_arguments)]
pub fn train_bilinear(
    model: &ZslModel,
    store: &ParamStore,
    ctx: &GraphContext<'_>,
    emb: Option<&EmbeddingTable>,
    train: &[Example],
    classes: &ClassSet,
    dev: Option<DevSet<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    classes.validate()?;
    if train.is_empty() || classes.seen.is_empty() {
        return Err(Error::Data("training needs examples and seen classes".into()));
    }
    let labels = label_indices(train, &classes.seen, cfg.loss, "training")?;
    let dev_labels = match &dev {
        Some(d) if !d.examples.is_empty() => Some(label_indices(d.examples, d.classes, cfg.loss, "dev")?),
        _ => None,
    };
    let seen: Vec<&str> = classes.seen.iter().map(String::as_str).collect();
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    let mut params = store.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let b = Binder::new(&tape, &params);
            let phis = stack(&model.gnn.forward_many(&b, ctx, &seen, Mode::Train(rng.random()))?)?;
            let xs: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let ys: Vec<&Vec<usize>> = chunk.iter().map(|&i| &labels[i]).collect();
            let sum = batch_loss(model, &b, emb, phis, &xs, &ys, cfg.loss)?;
            epoch_loss += sum.item();
            let grads = b.backward(sum.scale(1.0 / chunk.len() as f64))?;
            drop(b);
            adam.step(&mut params, &grads);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let dev_loss = match (&dev, &dev_labels) {
            (Some(d), Some(y)) => Some(dev_loss(model, &params, emb, d, y, cfg.loss, cfg.seed)?),
            _ => None,
        };
        info!("epoch {epoch}: train loss {train_loss:.6}, dev loss {dev_loss:?}");
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
        });
        if let Some(dl) = dev_loss {
            if best.as_ref().is_none_or(|(b, _, _)| dl < *b) {
                best = Some((dl, epoch, params.clone()));
            }
        }
    }
    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (cfg.epochs, params.clone()),
    };
    Ok(TrainOutcome {
        best: best_params,
        best_epoch,
        last: params,
        log,
    })
}

#[derive(Debug, Clone)]
pub struct L2Outcome {
    pub best: ParamStore,
    pub best_epoch: usize,
    pub last: ParamStore,
    pub log: Vec<EpochLog>,
}

fn l2_sum<'t>(gnn: &GnnStack, b: &Binder<'t, '_>, ctx: &GraphContext<'_>, ids: &[&str], classes: &ClassSet, mode: Mode) -> Result<Var<'t>> {
    let phis = gnn.forward_many(b, ctx, ids, mode)?;
    let mut total: Option<Var<'t>> = None;
    for (id, phi) in ids.iter().zip(phis) {
        let l = phi.l2_loss(b.vector(classes.target(id)?))?;
        total = Some(match total {
            Some(t) => t.add(l)?,
            None => l,
        });
    }
    total.ok_or_else(|| Error::Contract("no classes".into()))
}

/// Regresses class vectors of the seen classes onto their targets,
/// minimizing `Σ ‖φ(y) − target(y)‖²`. With `val`, the epoch with the lowest
/// validation-class loss is kept.
pub fn train_l2(
    gnn: &GnnStack,
    store: &ParamStore,
    ctx: &GraphContext<'_>,
    classes: &ClassSet,
    val: Option<(&GraphContext<'_>, &[String])>,
    cfg: &TrainConfig,
) -> Result<L2Outcome> {
    cfg.validate()?;
    classes.validate()?;
    for c in &classes.seen {
        classes.target(c)?;
    }
    if let Some((_, v)) = val {
        for c in v {
            classes.target(c)?;
        }
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    let mut params = store.clone();
    let mut order: Vec<&str> = classes.seen.iter().map(String::as_str).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let b = Binder::new(&tape, &params);
            let loss = l2_sum(gnn, &b, ctx, chunk, classes, Mode::Train(rng.random()))?;
            epoch_loss += loss.item();
            let grads = b.backward(loss)?;
            drop(b);
            adam.step(&mut params, &grads);
        }
        let dev_loss = match val {
            Some((vctx, ids)) if !ids.is_empty() => {
                let tape = Tape::new();
                let b = Binder::new(&tape, &params);
                let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
                Some(l2_sum(gnn, &b, vctx, &ids, classes, Mode::Eval(cfg.seed))?.item())
            }
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss,
            dev_loss,
        });
        if let Some(dl) = dev_loss {
            if best.as_ref().is_none_or(|(b, _, _)| dl < *b) {
                best = Some((dl, epoch, params.clone()));
            }
        }
    }
    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (cfg.epochs, params.clone()),
    };
    Ok(L2Outcome {
        best: best_params,
        best_epoch,
        last: params,
        log,
    })
}

/// Predictions for `examples` with `candidates` as the only classes.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &ZslModel,
    store: &ParamStore,
    ctx: &GraphContext<'_>,
    emb: Option<&EmbeddingTable>,
    examples: &[Example],
    candidates: &[String],
    mode: PredictMode,
    seed: u64,
) -> Result<Vec<Prediction>> {
    let reps = model.class_reps(store, ctx, candidates, seed)?;
    let thetas = model.encode_all(store, emb, examples)?;
    let head = (mode != PredictMode::L2).then_some((&model.head, store));
    thetas.iter().map(|t| predict(t, head, &reps, mode)).collect()
}
