//! Synthetic zero-shot benchmark with a brute-force accuracy oracle.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::seeded_rng;
use crate::eval::{Fold, FoldSpec};
use crate::kg::{FeatureTable, Graph};
use crate::zeroshot::{ClassSet, Example, Input};
use crate::{Error, Result};

pub const HAS_ATTRIBUTE: &str = "HasAttribute";
pub const LACKS_ATTRIBUTE: &str = "LacksAttribute";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Attribute pool size K.
    pub attributes: usize,
    pub seen: usize,
    pub unseen: usize,
    /// Attributes per class m.
    pub attrs_per_class: usize,
    pub dim: usize,
    pub noise: f64,
    pub examples_per_class: usize,
    /// Share of each seen class's examples held out for the dev set.
    pub dev_fraction: f64,
    /// Attribute nodes in a fixed half of the pool are linked by
    /// `LacksAttribute` and enter prototypes with a negative sign.
    pub relation_structure: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            attributes: 20,
            seen: 6,
            unseen: 4,
            attrs_per_class: 4,
            dim: 16,
            noise: 0.1,
            examples_per_class: 200,
            dev_fraction: 0.1,
            relation_structure: false,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn classes(&self) -> usize {
        self.seen + self.unseen
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Spec(m));
        if self.attrs_per_class == 0 {
            return err("attributes per class must be at least 1".into());
        }
        if self.attrs_per_class > self.attributes {
            return err(format!(
                "{} attributes per class exceed the pool of {}",
                self.attrs_per_class, self.attributes
            ));
        }
        if self.seen == 0 || self.unseen == 0 {
            return err("need at least one seen and one unseen class".into());
        }
        if self.dim == 0 || self.examples_per_class == 0 {
            return err("dim and examples per class must be positive".into());
        }
        if !(self.noise >= 0.0) {
            return err(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return err(format!("dev fraction must lie in [0, 1), got {}", self.dev_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub graph: Graph,
    pub features: FeatureTable,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub classes: ClassSet,
    pub folds: FoldSpec,
    /// Signed attribute sets per class.
    pub attributes: BTreeMap<String, Vec<(String, f64)>>,
    pub prototypes: BTreeMap<String, Vec<f64>>,
    /// Nearest-prototype accuracy on the unseen-class test examples.
    pub oracle_accuracy: f64,
}

pub fn class_id(i: usize) -> String {
    format!("class/{i:03}")
}

pub fn attribute_id(k: usize) -> String {
    format!("attr/{k:03}")
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest prototype among `candidates`, ties to the smaller id.
pub fn nearest_prototype<'a>(x: &[f64], prototypes: &'a BTreeMap<String, Vec<f64>>, candidates: &[String]) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for c in candidates {
        let (id, p) = prototypes.get_key_value(c)?;
        let d = sq_dist(x, p);
        if best.is_none_or(|(bid, bd)| d < bd || (d == bd && id.as_str() < bid)) {
            best = Some((id.as_str(), d));
        }
    }
    best.map(|(id, _)| id)
}

/// Builds the class/attribute graph, node features and examples.
///
/// Attribute node `k` carries a seeded feature `u_k ~ N(0, I)`; class nodes
/// carry zero vectors, so nothing about a class's examples is stored on its
/// node. An example of class `c` is the signed mean of its attribute
/// features plus `N(0, noise²)` noise per component.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let attr_ids: Vec<String> = (0..spec.attributes).map(attribute_id).collect();
    let attr_feats: Vec<Vec<f64>> = (0..spec.attributes)
        .map(|_| (0..spec.dim).map(|_| std.sample(&mut rng)).collect())
        .collect();
    let mut polarity = vec![1.0; spec.attributes];
    if spec.relation_structure {
        let mut idx: Vec<usize> = (0..spec.attributes).collect();
        idx.shuffle(&mut rng);
        for &k in &idx[..spec.attributes / 2] {
            polarity[k] = -1.0;
        }
    }

    let class_ids: Vec<String> = (0..spec.classes()).map(class_id).collect();
    let pool: Vec<usize> = (0..spec.attributes).collect();
    let mut gb = Graph::builder();
    let mut attributes = BTreeMap::new();
    let mut prototypes = BTreeMap::new();
    for c in &class_ids {
        let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, spec.attrs_per_class).copied().collect();
        chosen.sort_unstable();
        let mut proto = vec![0.0; spec.dim];
        let mut signed = Vec::with_capacity(chosen.len());
        for &k in &chosen {
            let rel = if polarity[k] < 0.0 { LACKS_ATTRIBUTE } else { HAS_ATTRIBUTE };
            gb.add_edge(c, rel, &attr_ids[k]);
            for (p, u) in proto.iter_mut().zip(&attr_feats[k]) {
                *p += polarity[k] * u / chosen.len() as f64;
            }
            signed.push((attr_ids[k].clone(), polarity[k]));
        }
        attributes.insert(c.clone(), signed);
        prototypes.insert(c.clone(), proto);
    }
    for a in &attr_ids {
        gb.add_node(a);
    }
    let graph = gb.build().make_bidirectional();

    let mut features = FeatureTable::new(spec.dim);
    for (a, u) in attr_ids.iter().zip(&attr_feats) {
        features.insert(a, u.clone())?;
    }
    for c in &class_ids {
        features.insert(c, vec![0.0; spec.dim])?;
    }

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Spec(e.to_string()))?;
    let n_dev = (spec.examples_per_class as f64 * spec.dev_fraction).round() as usize;
    let (seen, unseen) = class_ids.split_at(spec.seen);
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for (ci, c) in class_ids.iter().enumerate() {
        let proto = &prototypes[c];
        for n in 0..spec.examples_per_class {
            let v: Vec<f64> = proto.iter().map(|p| p + noise.sample(&mut rng)).collect();
            let x = Example::new(Input::Vector(v), &[c]);
            if ci >= spec.seen {
                test.push(x);
            } else if n < n_dev {
                dev.push(x);
            } else {
                train.push(x);
            }
        }
    }

    let correct = test
        .iter()
        .filter(|x| {
            let Input::Vector(v) = &x.input else { unreachable!() };
            nearest_prototype(v, &prototypes, unseen) == Some(x.labels[0].as_str())
        })
        .count();
    let folds = FoldSpec {
        folds: vec![Fold {
            train: seen.to_vec(),
            dev: Vec::new(),
            test: unseen.to_vec(),
        }],
    };
    Ok(SynthData {
        classes: ClassSet::new(seen, unseen)?,
        graph,
        features,
        train,
        dev,
        oracle_accuracy: correct as f64 / test.len() as f64,
        test,
        folds,
        attributes,
        prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_oracle_is_high() {
        let d = generate_synthetic(&SynthSpec::default()).unwrap();
        assert!(d.oracle_accuracy >= 0.95, "{}", d.oracle_accuracy);
        assert_eq!(d.graph.node_count(), 30);
        assert_eq!(d.train.len(), 6 * 180);
        assert_eq!(d.dev.len(), 6 * 20);
        assert_eq!(d.test.len(), 4 * 200);
    }

    #[test]
    fn noiseless_distinct_prototypes_are_perfect() {
        let spec = SynthSpec { noise: 0.0, seed: 3, ..SynthSpec::default() };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.oracle_accuracy, 1.0);
    }

    #[test]
    fn identical_attribute_sets_tie_to_smaller_id() {
        // One attribute per class from a pool of one: every prototype equals.
        let spec = SynthSpec { attributes: 1, attrs_per_class: 1, seen: 1, unseen: 2, noise: 0.0, ..SynthSpec::default() };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.oracle_accuracy, 0.5);
    }

    #[test]
    fn invalid_specs() {
        let spec = SynthSpec { attrs_per_class: 21, ..SynthSpec::default() };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Spec(_))));
        let spec = SynthSpec { noise: -1.0, ..SynthSpec::default() };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn relation_structure_signs_prototypes_and_relations() {
        let spec = SynthSpec { relation_structure: true, ..SynthSpec::default() };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.graph.relation_count(), 2);
        let negatives = d.attributes.values().flatten().filter(|(_, s)| *s < 0.0).count();
        assert!(negatives > 0);
        for (c, attrs) in &d.attributes {
            for (a, s) in attrs {
                let rel = if *s < 0.0 { LACKS_ATTRIBUTE } else { HAS_ATTRIBUTE };
                assert!(d.graph.has_edge(c, rel, a));
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_synthetic(&SynthSpec::default()).unwrap();
        let b = generate_synthetic(&SynthSpec::default()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.graph, b.graph);
    }
}
