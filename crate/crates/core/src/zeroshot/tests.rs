use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::aggregators::{AggregatorKind, GnnConfig, GnnStack, GraphContext};
use crate::autodiff::{grad_check, objective, seeded_rng, AdamConfig, GradCheckConfig, Tape, Tensor};
use crate::kg::{ConceptTokenizer, FeatureTable, Graph};
use crate::nn::Activation;
use crate::sampler::{HitTables, WalkConfig};

/// Numerical rank from the singular values of `m`, found by one-sided
/// Jacobi rotations.
fn numerical_rank(m: &[Vec<f64>], tol: f64) -> usize {
    let rows = m.len();
    let cols = m[0].len();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m[i][j]).collect()).collect();
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = c * x - s * y;
                    a[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = a.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > tol * max.max(1.0)).count()
}

fn identity(n: usize) -> Tensor {
    Tensor::matrix(n, n, (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()).unwrap()
}

#[test]
fn identity_factors_give_inner_product() {
    let head = BilinearHead::new("h", 3, 3, 3);
    let mut s = ParamStore::new();
    s.insert(head.a_name(), identity(3));
    s.insert(head.b_name(), identity(3));
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let theta = b.vector(&[1.0, 2.0, -1.0]);
    let v = head.score(&b, theta, b.vector(&[0.5, 0.25, 2.0])).unwrap().item();
    assert_eq!(v, 0.5 + 0.5 - 2.0);
    let orth = head.score(&b, theta, b.vector(&[2.0, -1.0, 0.0])).unwrap().item();
    assert_eq!(orth, 0.0);
    assert!(head.score(&b, theta, b.vector(&[1.0, 1.0])).is_err());
}

#[test]
fn low_rank_product() {
    for seed in 0..5 {
        let head = BilinearHead::new("h", 7, 6, 2);
        let mut s = ParamStore::new();
        head.init(&mut s, &mut seeded_rng(seed));
        assert_eq!(numerical_rank(&head.weight(&s).unwrap(), 1e-8), 2);
    }
    let full = vec![vec![2.0, 0.0], vec![0.0, 3.0]];
    assert_eq!(numerical_rank(&full, 1e-8), 2);
}

#[test]
fn head_scores_match_single_scores_and_gradients() {
    let head = BilinearHead::new("h", 3, 4, 2);
    let mut s = ParamStore::new();
    head.init(&mut s, &mut seeded_rng(3));
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let theta = b.vector(&[0.3, -0.1, 0.8]);
    let phis = [[0.2, 0.1, -0.4, 0.9], [1.0, 0.0, 0.5, -0.3]];
    let many = head
        .scores(&b, theta, stack(&phis.iter().map(|p| b.vector(p)).collect::<Vec<_>>()).unwrap())
        .unwrap()
        .data();
    for (i, p) in phis.iter().enumerate() {
        let one = head.score(&b, theta, b.vector(p)).unwrap().item();
        assert!((one - many[i]).abs() < 1e-12);
    }
    for mode in [LossMode::Multiclass, LossMode::Multilabel] {
        let f = objective(|b| {
            let phis = stack(&[b.vector(&phis[0]), b.vector(&phis[1])])?;
            let sc = head.scores(b, b.vector(&[0.3, -0.1, 0.8]), phis)?;
            match mode {
                LossMode::Multiclass => sc.cross_entropy(1),
                LossMode::Multilabel => sc.binary_cross_entropy(&[1.0, 0.0]),
            }
        });
        assert!(grad_check(&f, &s, &GradCheckConfig::default()).unwrap().passed);
    }
}

fn scores(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(c, s)| (c.to_string(), *s)).collect()
}

#[test]
fn argmax_and_threshold() {
    assert_eq!(rank_by_score(&scores(&[("a", 2.0), ("b", 1.0), ("c", 3.0)]))[0], "c");
    assert_eq!(threshold_labels(&scores(&[("x", 2.0), ("y", -2.0)])), ["x"]);
    assert!(threshold_labels(&scores(&[("x", 0.0)])).is_empty());
    let reps: BTreeMap<String, Vec<f64>> = [("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![0.0, 1.0])].into();
    let p = predict(&[0.2, 0.9], None, &reps, PredictMode::L2).unwrap();
    assert_eq!(p, Prediction::Ranked(vec!["b".into(), "a".into()]));
    assert_eq!(p.labels(), ["b"]);
    assert!(predict(&[0.2, 0.9], None, &reps, PredictMode::Multiclass).is_err());
}

proptest! {
    #[test]
    fn ranking_is_scale_invariant(vals in prop::collection::vec(-5.0f64..5.0, 1..8), c in 0.01f64..100.0) {
        let base: Vec<(String, f64)> = vals.iter().enumerate().map(|(i, v)| (format!("c{i}"), *v)).collect();
        let scaled: Vec<(String, f64)> = base.iter().map(|(n, v)| (n.clone(), v * c)).collect();
        prop_assert_eq!(rank_by_score(&base), rank_by_score(&scaled));
        prop_assert_eq!(threshold_labels(&base), threshold_labels(&scaled));
    }
}

#[test]
fn averaged_name_embeddings() {
    let mut e = EmbeddingTable::new(2, 7);
    e.insert("person", vec![1.0, 2.0]).unwrap();
    e.insert("living", vec![1.0, 0.0]).unwrap();
    e.insert("thing", vec![0.0, 1.0]).unwrap();
    let t = ConceptTokenizer;
    assert_eq!(class_rep_avg_embedding("person", &e, &t).unwrap(), [1.0, 2.0]);
    assert_eq!(class_rep_avg_embedding("living thing", &e, &t).unwrap(), [0.5, 0.5]);
    let oov = class_rep_avg_embedding("zorblax", &e, &t).unwrap();
    assert_eq!(oov, class_rep_avg_embedding("zorblax", &e, &t).unwrap());
    assert_ne!(oov, [0.0, 0.0]);
    assert!(matches!(class_rep_avg_embedding(" _ ", &e, &t), Err(Error::Contract(_))));
}

#[test]
fn class_set_rules() {
    assert!(ClassSet::new(&["a", "b"], &["b"]).is_err());
    let c = ClassSet::new(&["a"], &["b"]).unwrap();
    assert!(matches!(c.target("a"), Err(Error::Data(_))));
}

struct World {
    graph: Graph,
    features: FeatureTable,
    hits: HitTables,
    train: Vec<Example>,
    dev: Vec<Example>,
}

/// Classes `c0..c2` and `u0` over attributes `a0..a5`; examples of a class
/// are its mean attribute feature plus noise.
fn world() -> World {
    let attrs = [["a0", "a1"], ["a2", "a3"], ["a4", "a5"], ["a0", "a5"]];
    let names = ["c0", "c1", "c2", "u0"];
    let mut gb = Graph::builder();
    for (c, a) in names.iter().zip(&attrs) {
        for x in a {
            gb.add_edge(c, "has", x);
        }
    }
    let graph = gb.build().make_bidirectional();
    let mut rng = seeded_rng(42);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut features = FeatureTable::new(4);
    for n in graph.nodes() {
        features.insert(n, (0..4).map(|_| normal.sample(&mut rng)).collect()).unwrap();
    }
    let hits = HitTables::compute(&graph, &WalkConfig::default()).unwrap();
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for (c, a) in names.iter().zip(&attrs).take(3) {
        let proto: Vec<f64> = (0..4)
            .map(|k| a.iter().map(|x| features.get(x).unwrap()[k]).sum::<f64>() / 2.0)
            .collect();
        for n in 0..12 {
            let v = proto.iter().map(|p| p + noise.sample(&mut rng)).collect();
            let x = Example::new(Input::Vector(v), &[c]);
            if n < 10 { train.push(x) } else { dev.push(x) }
        }
    }
    World {
        graph,
        features,
        hits,
        train,
        dev,
    }
}

fn model(w: &World) -> (ZslModel, ParamStore) {
    let cfg = GnnConfig::uniform(AggregatorKind::Gcn, &[4, 6, 6], Activation::LeakyRelu);
    let gnn = GnnStack::new("gnn", cfg, w.graph.relations()).unwrap();
    let m = ZslModel::new(ExampleEncoder::Precomputed { dim: 4 }, gnn, 3);
    let mut s = ParamStore::new();
    m.init(&mut s, &mut seeded_rng(1));
    (m, s)
}

fn seen() -> ClassSet {
    ClassSet::new(&["c0", "c1", "c2"], &["u0"]).unwrap()
}

#[test]
fn separable_training_decreases_loss_and_picks_best_dev_epoch() {
    let w = world();
    let (m, s) = model(&w);
    let train_graph = w.graph.without_nodes(["u0"]);
    let train_hits = HitTables::compute(&train_graph, &WalkConfig::default()).unwrap();
    let ctx = GraphContext::new(&train_graph, &w.features, &train_hits);
    let dev_classes = seen().seen;
    let dev = DevSet {
        ctx: &ctx,
        examples: &w.dev,
        classes: &dev_classes,
    };
    let cfg = TrainConfig {
        epochs: 8,
        batch_size: 8,
        adam: AdamConfig { lr: 0.02, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let out = train_bilinear(&m, &s, &ctx, None, &w.train, &seen(), Some(dev), &cfg).unwrap();
    let losses: Vec<f64> = out.log.iter().map(|e| e.train_loss).collect();
    assert!(losses[0] > losses[1] && losses[1] > losses[2], "{losses:?}");
    let devs: Vec<f64> = out.log.iter().map(|e| e.dev_loss.unwrap()).collect();
    let argmin = devs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
    assert_eq!(out.best_epoch, argmin);
    assert!(!ctx.trace().contains("u0"));

    let again = train_bilinear(&m, &s, &ctx, None, &w.train, &seen(), Some(dev), &cfg).unwrap();
    assert_eq!(again.best.to_json().unwrap(), out.best.to_json().unwrap());
    assert_eq!(again.log, out.log);

    // The unseen class is scored on the full graph.
    let full = GraphContext::new(&w.graph, &w.features, &w.hits);
    let preds = evaluate(&m, &out.best, &full, None, &w.dev, &["u0".to_string()], PredictMode::Multiclass, 0).unwrap();
    assert!(preds.iter().all(|p| p.labels() == ["u0"]));
}

#[test]
fn labels_outside_seen_set_are_rejected() {
    let w = world();
    let (m, s) = model(&w);
    let ctx = GraphContext::new(&w.graph, &w.features, &w.hits);
    let mut bad = w.train.clone();
    bad[3].labels = vec!["u0".into()];
    let err = train_bilinear(&m, &s, &ctx, None, &bad, &seen(), None, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Data(ref msg) if msg.contains("example 3")), "{err}");
}

#[test]
fn multilabel_training_runs() {
    let w = world();
    let (m, s) = model(&w);
    let ctx = GraphContext::new(&w.graph, &w.features, &w.hits);
    let mut xs = w.train.clone();
    xs[0].labels.push("c1".into());
    let cfg = TrainConfig {
        epochs: 2,
        loss: LossMode::Multilabel,
        ..TrainConfig::default()
    };
    let out = train_bilinear(&m, &s, &ctx, None, &xs, &seen(), None, &cfg).unwrap();
    assert_eq!(out.best_epoch, 2);
    assert!(out.log.iter().all(|e| e.train_loss.is_finite()));
}

fn single_node() -> (Graph, FeatureTable, HitTables) {
    let mut gb = Graph::builder();
    gb.add_node("y");
    let g = gb.build();
    let mut ft = FeatureTable::new(3);
    ft.insert("y", vec![0.5, -1.0, 2.0]).unwrap();
    let hits = HitTables::compute(&g, &WalkConfig::default()).unwrap();
    (g, ft, hits)
}

#[test]
fn l2_head_converges_on_single_class() {
    let (g, ft, hits) = single_node();
    let ctx = GraphContext::new(&g, &ft, &hits);
    let cfg = GnnConfig::uniform(AggregatorKind::Gcn, &[3, 2], Activation::Identity).with_hop_limits(vec![5]);
    let gnn = GnnStack::new("gnn", cfg, &[]).unwrap();
    let mut s = ParamStore::new();
    gnn.init(&mut s, &mut seeded_rng(0));
    let target = vec![0.7, -0.4];
    let classes = ClassSet::new(&["y"], &[] as &[&str]).unwrap().with_targets([("y".to_string(), target.clone())].into());
    let tc = TrainConfig {
        epochs: 500,
        adam: AdamConfig { lr: 0.01, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let out = train_l2(&gnn, &s, &ctx, &classes, None, &tc).unwrap();
    let phi = gnn.embed(&out.last, &ctx, &["y"], 0).unwrap().remove(0);
    // Least-squares oracle: any W with W x = target gives zero loss.
    for (p, t) in phi.iter().zip(&target) {
        assert!((p - t).abs() < 1e-3, "{phi:?}");
    }
}

#[test]
fn l2_loss_is_zero_at_targets_and_needs_targets() {
    let (g, ft, hits) = single_node();
    let ctx = GraphContext::new(&g, &ft, &hits);
    let cfg = GnnConfig::uniform(AggregatorKind::Gcn, &[3, 3], Activation::Identity).with_hop_limits(vec![5]);
    let gnn = GnnStack::new("gnn", cfg, &[]).unwrap();
    let mut s = ParamStore::new();
    s.insert("gnn.l1.w", identity(3));
    let classes = ClassSet::new(&["y"], &[] as &[&str]).unwrap();
    let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
    assert!(matches!(train_l2(&gnn, &s, &ctx, &classes, None, &tc), Err(Error::Data(_))));
    let classes = classes.with_targets([("y".to_string(), vec![0.5, -1.0, 2.0])].into());
    let out = train_l2(&gnn, &s, &ctx, &classes, Some((&ctx, &["y".to_string()])), &tc).unwrap();
    assert_eq!(out.log[0].train_loss, 0.0);
}
