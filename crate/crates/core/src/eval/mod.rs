//! Fold specifications and strict-accuracy metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

/// Train, dev and test classes of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    #[serde(default)]
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub folds: Vec<Fold>,
}

impl FoldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.folds.is_empty() {
            return Err(Error::Config("fold spec has no folds".into()));
        }
        for (i, f) in self.folds.iter().enumerate() {
            let sets = [("train", &f.train), ("dev", &f.dev), ("test", &f.test)];
            for (a, (na, sa)) in sets.iter().enumerate() {
                for (nb, sb) in &sets[a + 1..] {
                    if let Some(c) = sa.iter().find(|c| sb.contains(c)) {
                        return Err(Error::Config(format!("fold {i}: class `{c}` is in both {na} and {nb}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Exact set equality; duplicates are ignored.
pub fn strict_match<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T]) -> bool {
    let p: BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    let g: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    p == g
}

fn round4<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((x * 1e4).round() / 1e4)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldScore {
    pub n: usize,
    pub correct: usize,
    #[serde(serialize_with = "round4")]
    pub acc: f64,
}

/// Micro and macro strict accuracy over folds. JSON output is rounded to
/// four decimals; the fields keep full precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub per_fold: Vec<FoldScore>,
    #[serde(serialize_with = "round4")]
    pub micro: f64,
    #[serde(serialize_with = "round4")]
    pub macro_: f64,
}

impl EvalResult {
    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("struct serializes to an object");
        let m = obj.remove("macro_").expect("field present");
        obj.insert("macro".into(), m);
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// `(predicted labels, gold labels)` pairs for each fold.
pub type FoldResults = Vec<Vec<(Vec<String>, Vec<String>)>>;

pub fn fold_metrics(results: &FoldResults) -> Result<EvalResult> {
    if results.is_empty() {
        return Err(Error::Contract("no folds to score".into()));
    }
    let mut per_fold = Vec::with_capacity(results.len());
    for (i, fold) in results.iter().enumerate() {
        if fold.is_empty() {
            return Err(Error::Contract(format!("fold {i} has no examples")));
        }
        let correct = fold.iter().filter(|(p, g)| strict_match(p, g)).count();
        per_fold.push(FoldScore {
            n: fold.len(),
            correct,
            acc: correct as f64 / fold.len() as f64,
        });
    }
    let total: usize = per_fold.iter().map(|f| f.n).sum();
    let correct: usize = per_fold.iter().map(|f| f.correct).sum();
    let macro_ = per_fold.iter().map(|f| f.acc).sum::<f64>() / per_fold.len() as f64;
    Ok(EvalResult {
        micro: correct as f64 / total as f64,
        macro_,
        per_fold,
    })
}

pub fn topk_hit<S: AsRef<str>>(ranked: &[S], gold: &str, k: usize) -> bool {
    assert!(k >= 1, "k must be at least 1");
    ranked.iter().take(k).any(|c| c.as_ref() == gold)
}

/// Unweighted mean over gold classes of each class's top-k hit rate.
pub fn per_class_topk<S: AsRef<str>>(items: &[(Vec<S>, String)], k: usize) -> f64 {
    let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (ranked, gold) in items {
        let e = per.entry(gold.as_str()).or_default();
        e.1 += 1;
        if topk_hit(ranked, gold, k) {
            e.0 += 1;
        }
    }
    if per.is_empty() {
        return 0.0;
    }
    per.values().map(|(h, n)| *h as f64 / *n as f64).sum::<f64>() / per.len() as f64
}
