//! Zero-shot heads coupling example vectors θ(x) with class vectors φ(y).
//!
//! The bilinear head scores `θᵀ B A φ` with a rank-`h` factorization and is
//! trained with softmax or per-class sigmoid losses over seen classes. The
//! L2 head instead regresses φ(y) onto given class target vectors and ranks
//! classes by the inner product `θ · φ`.

mod model;
mod train;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use model::{Example, ExampleEncoder, Input, ZslModel};
pub use train::{
    evaluate, train_bilinear, train_l2, DevSet, EpochLog, L2Outcome, LossMode, TrainConfig, TrainOutcome,
};

use crate::autodiff::{stack, Binder, ParamStore, Var};
use crate::kg::{EmbeddingTable, Tokenizer};
use crate::{Error, Result};

/// Low-rank bilinear compatibility `θᵀ B A φ` with `A: (h, d_phi)` and
/// `B: (d_theta, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearHead {
    pub prefix: String,
    pub theta_dim: usize,
    pub phi_dim: usize,
    pub rank: usize,
}

impl BilinearHead {
    pub fn new(prefix: impl Into<String>, theta_dim: usize, phi_dim: usize, rank: usize) -> Self {
        Self {
            prefix: prefix.into(),
            theta_dim,
            phi_dim,
            rank,
        }
    }

    pub fn a_name(&self) -> String {
        format!("{}.a", self.prefix)
    }

    pub fn b_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.glorot(self.a_name(), self.rank, self.phi_dim, rng);
        store.glorot(self.b_name(), self.theta_dim, self.rank, rng);
    }

    pub fn score<'t>(&self, b: &Binder<'t, '_>, theta: Var<'t>, phi: Var<'t>) -> Result<Var<'t>> {
        let a = b.param(&self.a_name())?;
        let bm = b.param(&self.b_name())?;
        theta.matmul(bm)?.matmul(a)?.dot(phi)
    }

    /// Scores of one example against every row of `phis` `(C, d_phi)`.
    pub fn scores<'t>(&self, b: &Binder<'t, '_>, theta: Var<'t>, phis: Var<'t>) -> Result<Var<'t>> {
        let a = b.param(&self.a_name())?;
        let bm = b.param(&self.b_name())?;
        phis.matmul(theta.matmul(bm)?.matmul(a)?)
    }

    /// The implied `(d_theta, d_phi)` matrix `W = B A`.
    pub fn weight(&self, store: &ParamStore) -> Result<Vec<Vec<f64>>> {
        let a = store.require(&self.a_name())?;
        let bm = store.require(&self.b_name())?;
        Ok((0..self.theta_dim)
            .map(|i| {
                (0..self.phi_dim)
                    .map(|j| (0..self.rank).map(|k| bm.at(i, k) * a.at(k, j)).sum())
                    .collect()
            })
            .collect())
    }
}

/// Seen and unseen class node ids, plus L2 targets when that head is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassSet {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    #[serde(default)]
    pub target_vectors: Option<BTreeMap<String, Vec<f64>>>,
}

impl ClassSet {
    pub fn new<S: AsRef<str>>(seen: &[S], unseen: &[S]) -> Result<Self> {
        let c = Self {
            seen: seen.iter().map(|s| s.as_ref().to_string()).collect(),
            unseen: unseen.iter().map(|s| s.as_ref().to_string()).collect(),
            target_vectors: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_targets(mut self, targets: BTreeMap<String, Vec<f64>>) -> Self {
        self.target_vectors = Some(targets);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let seen: BTreeSet<&String> = self.seen.iter().collect();
        if let Some(c) = self.unseen.iter().find(|c| seen.contains(c)) {
            return Err(Error::Config(format!("class `{c}` is both seen and unseen")));
        }
        if seen.len() != self.seen.len() {
            return Err(Error::Config("duplicate seen class".into()));
        }
        Ok(())
    }

    pub fn target(&self, class: &str) -> Result<&[f64]> {
        self.target_vectors
            .as_ref()
            .and_then(|t| t.get(class))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("no target vector for class `{class}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    /// Rank by bilinear score; the top class is the prediction.
    Multiclass,
    /// Every class whose sigmoid score exceeds 0.5.
    Multilabel,
    /// Rank by `θ · φ`.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Ranked(Vec<String>),
    Labels(Vec<String>),
}

impl Prediction {
    /// Top class for a ranking, the label set otherwise.
    pub fn labels(&self) -> Vec<String> {
        match self {
            Prediction::Ranked(r) => r.first().cloned().into_iter().collect(),
            Prediction::Labels(l) => l.clone(),
        }
    }
}

/// Classes by score descending, ties by id.
pub fn rank_by_score(scores: &[(String, f64)]) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = scores.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(c, _)| c.clone()).collect()
}

/// Classes whose logit maps above 0.5 under the sigmoid, sorted by id.
pub fn threshold_labels(scores: &[(String, f64)]) -> Vec<String> {
    let mut v: Vec<String> = scores
        .iter()
        .filter(|(_, s)| 1.0 / (1.0 + (-s).exp()) > 0.5)
        .map(|(c, _)| c.clone())
        .collect();
    v.sort();
    v
}

/// Scores `theta` against each class representation and turns the scores
/// into a prediction. `head` is required for the bilinear modes.
pub fn predict(
    theta: &[f64],
    head: Option<(&BilinearHead, &ParamStore)>,
    class_reps: &BTreeMap<String, Vec<f64>>,
    mode: PredictMode,
) -> Result<Prediction> {
    let scores = class_scores(theta, head, class_reps, mode)?;
    Ok(match mode {
        PredictMode::Multilabel => Prediction::Labels(threshold_labels(&scores)),
        _ => Prediction::Ranked(rank_by_score(&scores)),
    })
}

pub fn class_scores(
    theta: &[f64],
    head: Option<(&BilinearHead, &ParamStore)>,
    class_reps: &BTreeMap<String, Vec<f64>>,
    mode: PredictMode,
) -> Result<Vec<(String, f64)>> {
    if class_reps.is_empty() {
        return Ok(Vec::new());
    }
    let names: Vec<&String> = class_reps.keys().collect();
    let values: Vec<f64> = match mode {
        PredictMode::L2 => class_reps
            .values()
            .map(|phi| {
                if phi.len() != theta.len() {
                    return Err(Error::shape("L2 score", format!("θ has {} dims, φ has {}", theta.len(), phi.len())));
                }
                Ok(theta.iter().zip(phi).map(|(a, b)| a * b).sum())
            })
            .collect::<Result<_>>()?,
        _ => {
            let (head, store) =
                head.ok_or_else(|| Error::Config("bilinear prediction needs a head".into()))?;
            let tape = crate::autodiff::Tape::new();
            let b = Binder::new(&tape, store);
            let phis = stack(&class_reps.values().map(|p| b.vector(p)).collect::<Vec<_>>())?;
            head.scores(&b, b.vector(theta), phis)?.data()
        }
    };
    Ok(names.into_iter().cloned().zip(values).collect())
}

/// Class vector as the mean embedding of the class name's tokens.
pub fn class_rep_avg_embedding(name: &str, emb: &EmbeddingTable, tokenizer: &impl Tokenizer) -> Result<Vec<f64>> {
    let tokens = tokenizer.tokens(name);
    emb.mean_vector(&tokens)
        .ok_or_else(|| Error::Contract(format!("class name `{name}` has no tokens")))
}

#[cfg(test)]
mod tests;
