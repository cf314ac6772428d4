use proptest::prelude::*;

use super::*;
use crate::autodiff::{grad_check, objective, seeded_rng, GradCheckConfig, Tape, Tensor};
use crate::kg::{FeatureTable, Graph};
use crate::sampler::{HitTables, WalkConfig};

fn layer(kind: AggregatorKind, d_in: usize, d_out: usize) -> AggregatorLayer {
    let cfg = LayerConfig::new(kind, d_in, d_out).with_activation(Activation::LeakyRelu);
    AggregatorLayer::new("agg", cfg, vec!["isa".into(), "has".into()]).unwrap()
}

fn init(l: &AggregatorLayer, seed: u64) -> ParamStore {
    let mut s = ParamStore::new();
    l.init(&mut s, &mut seeded_rng(seed));
    s
}

fn run(l: &AggregatorLayer, s: &ParamStore, me: &[f64], nbrs: &[(&[f64], &[&str])]) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let b = Binder::new(&tape, s);
    let inputs: Vec<_> = nbrs
        .iter()
        .map(|(f, r)| NeighborInput::with_relations(b.vector(f), r))
        .collect();
    Ok(l.forward(&b, b.vector(me), &inputs, SequenceOrder::Seeded(3))?.data())
}

fn identity(n: usize) -> Tensor {
    Tensor::matrix(n, n, (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()).unwrap()
}

#[test]
fn gcn_identity_mean() {
    let l = AggregatorLayer::new("g", LayerConfig::new(AggregatorKind::Gcn, 2, 2), vec![]).unwrap();
    let mut s = ParamStore::new();
    s.insert("g.w", identity(2));
    assert_eq!(run(&l, &s, &[1.0, 0.0], &[(&[0.0, 1.0], &[])]).unwrap(), [0.5, 0.5]);
    assert_eq!(run(&l, &s, &[1.0, -2.0], &[]).unwrap(), [1.0, 0.0]);
}

#[test]
fn dimension_mismatch_is_shape_error() {
    let l = layer(AggregatorKind::Gcn, 3, 2);
    let s = init(&l, 0);
    let err = run(&l, &s, &[1.0, 0.0, 0.0], &[(&[1.0, 2.0], &[])]).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
}

#[test]
fn gat_identical_members_reduce_to_projection() {
    let l = layer(AggregatorKind::Gat, 3, 2);
    let s = init(&l, 1);
    let h = [0.2, -0.4, 0.7];
    let with = run(&l, &s, &h, &[(&h, &[]), (&h, &[])]).unwrap();
    let alone = run(&l, &s, &h, &[]).unwrap();
    for (a, b) in with.iter().zip(&alone) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn rgcn_identity_basis_matches_per_relation_weights() {
    let cfg = LayerConfig::new(AggregatorKind::Rgcn, 3, 2).with_bases(2).with_activation(Activation::Identity);
    let l = AggregatorLayer::new("r", cfg, vec!["isa".into(), "has".into()]).unwrap();
    let mut s = init(&l, 2);
    identity_coefficients(&l, &mut s).unwrap();
    let me = [0.1, 0.2, 0.3];
    let n1 = [1.0, 0.0, -1.0];
    let n2 = [0.5, 0.5, 0.5];
    let n3 = [-0.3, 0.9, 0.0];
    let got = run(&l, &s, &me, &[(&n1, &["isa"]), (&n2, &["isa", "has"]), (&n3, &["has"])]).unwrap();

    let mv = |w: &Tensor, x: &[f64]| -> Vec<f64> {
        (0..w.rows()).map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    let mean = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect() };
    let self_term = mv(s.get("r.w_self").unwrap(), &me);
    let isa = mv(s.get("r.v0").unwrap(), &mean(&n1, &n2));
    let has = mv(s.get("r.v1").unwrap(), &mean(&n2, &n3));
    for i in 0..2 {
        let want = self_term[i] + isa[i] + has[i];
        assert!((got[i] - want).abs() < 1e-12, "{got:?}");
    }
}

#[test]
fn rgcn_without_neighbors_uses_self_weight() {
    let cfg = LayerConfig::new(AggregatorKind::Rgcn, 2, 2);
    let l = AggregatorLayer::new("r", cfg, vec!["isa".into()]).unwrap();
    let mut s = init(&l, 3);
    s.insert("r.w_self", identity(2));
    assert_eq!(run(&l, &s, &[0.5, -1.0], &[]).unwrap(), [0.5, 0.0]);
}

#[test]
fn rgcn_rejects_unknown_relation() {
    let l = layer(AggregatorKind::Rgcn, 2, 2);
    let s = init(&l, 0);
    let err = run(&l, &s, &[0.0, 1.0], &[(&[1.0, 1.0], &["partof"])]).unwrap_err();
    assert!(matches!(err, Error::UnknownRelation(ref r) if r == "partof"));
}

#[test]
fn zero_lstm_gives_zero_aggregate() {
    let l = layer(AggregatorKind::Lstm, 2, 3);
    let mut s = init(&l, 4);
    lstm::cell(&l).init_zeros(&mut s);
    let me = [0.4, -0.9];
    let got = run(&l, &s, &me, &[(&[1.0, 1.0], &[]), (&[2.0, 0.0], &[])]).unwrap();
    let w = s.get("agg.w").unwrap();
    let want: Vec<f64> = (0..3)
        .map(|r| {
            let z = w.at(r, 0) * me[0] + w.at(r, 1) * me[1];
            if z > 0.0 { z } else { 0.2 * z }
        })
        .collect();
    assert_eq!(w.shape(), [3, 4]);
    for (g, e) in got.iter().zip(&want) {
        assert!((g - e).abs() < 1e-12);
    }
}

#[test]
fn lstm_is_order_sensitive_and_checks_permutations() {
    let l = layer(AggregatorKind::Lstm, 2, 2);
    let s = init(&l, 5);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let me = b.vector(&[0.3, 0.1]);
    let nb: Vec<_> = [[1.0, -1.0], [0.2, 0.8], [-0.5, 0.4]]
        .iter()
        .map(|f| NeighborInput::new(b.vector(f)))
        .collect();
    let a = l.forward(&b, me, &nb, SequenceOrder::Explicit(&[0, 1, 2, 3])).unwrap().data();
    let c = l.forward(&b, me, &nb, SequenceOrder::Explicit(&[3, 2, 1, 0])).unwrap().data();
    let a2 = l.forward(&b, me, &nb, SequenceOrder::Explicit(&[0, 1, 2, 3])).unwrap().data();
    assert_ne!(a, c);
    assert_eq!(a, a2);
    assert!(l.forward(&b, me, &nb, SequenceOrder::Explicit(&[0, 1, 1, 3])).is_err());
    assert!(l.forward(&b, me, &nb, SequenceOrder::Explicit(&[0, 1, 2])).is_err());
    // Self alone: every order is the same sequence.
    let x = l.forward(&b, me, &[], SequenceOrder::Seeded(1)).unwrap().data();
    let y = l.forward(&b, me, &[], SequenceOrder::Seeded(2)).unwrap().data();
    assert_eq!(x, y);
}

#[test]
fn transformer_uses_half_width_block() {
    let l = layer(AggregatorKind::Transformer, 6, 4);
    let s = init(&l, 6);
    assert_eq!(s.get("agg.proj_in.weight").unwrap().shape(), [3, 6]);
    assert_eq!(s.get("agg.q.weight").unwrap().shape(), [3, 3]);
    assert_eq!(s.get("agg.ff1.weight").unwrap().shape(), [3, 3]);
    assert_eq!(s.get("agg.proj_out.weight").unwrap().shape(), [6, 3]);
    assert_eq!(s.get("agg.w").unwrap().shape(), [4, 6]);
    assert!(!s.names().any(|n| n.contains("l2") || n.contains("layer1")));
    assert!(AggregatorLayer::new("t", LayerConfig::new(AggregatorKind::Transformer, 1, 1), vec![]).is_err());
}

#[test]
fn every_kind_passes_grad_check() {
    for kind in AggregatorKind::ALL {
        let l = layer(kind, 4, 3);
        let s = init(&l, 7);
        let f = objective(|b| {
            let me = b.vector(&[0.3, -0.2, 0.5, 0.9]);
            let nb = [
                NeighborInput::with_relations(b.vector(&[0.1, 0.4, -0.6, 0.2]), &["isa"]),
                NeighborInput::with_relations(b.vector(&[-0.7, 0.3, 0.8, -0.1]), &["has"]),
                NeighborInput::with_relations(b.vector(&[0.5, 0.5, -0.2, 0.3]), &["isa", "has"]),
            ];
            let h = l.forward(b, me, &nb, SequenceOrder::Seeded(11))?;
            Ok(h.mul(b.vector(&[1.0, -0.5, 0.25]))?.sum_all())
        });
        let r = grad_check(&f, &s, &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{kind}: {r:?}");
    }
}

fn feats(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetric_kinds_are_bitwise_permutation_invariant(
        rows in feats(6, 4),
        rels in prop::collection::vec(0usize..3, 5),
        perm_seed in any::<u64>(),
        init_seed in 0u64..50,
    ) {
        let names = [&["isa"][..], &["has"][..], &["isa", "has"][..]];
        let nbrs: Vec<(&[f64], &[&str])> = rows[1..].iter().zip(&rels).map(|(f, &r)| (f.as_slice(), names[r])).collect();
        let perm = seeded_permutation(nbrs.len(), perm_seed);
        let shuffled: Vec<_> = perm.iter().map(|&i| nbrs[i]).collect();
        for kind in [AggregatorKind::Gcn, AggregatorKind::Gat, AggregatorKind::Rgcn, AggregatorKind::Transformer] {
            let l = layer(kind, 4, 3);
            let s = init(&l, init_seed);
            let a = run(&l, &s, &rows[0], &nbrs).unwrap();
            let b = run(&l, &s, &rows[0], &shuffled).unwrap();
            prop_assert_eq!(a, b, "{}", kind);
        }
    }
}

fn star_graph() -> (Graph, FeatureTable) {
    let mut gb = Graph::builder();
    gb.add_edge("c", "isa", "a")
        .add_edge("c", "has", "b")
        .add_edge("a", "isa", "x")
        .add_edge("x", "isa", "far");
    let g = gb.build().make_bidirectional();
    let mut ft = FeatureTable::new(3);
    for (i, n) in ["c", "a", "b", "x", "far"].iter().enumerate() {
        let i = i as f64;
        ft.insert(n, vec![0.1 * i, 1.0 - 0.2 * i, (i - 2.0) * 0.3]).unwrap();
    }
    (g, ft)
}

#[test]
fn one_layer_stack_equals_single_layer() {
    let (g, ft) = star_graph();
    let hits = HitTables::compute(&g, &WalkConfig::default()).unwrap();
    let ctx = GraphContext::new(&g, &ft, &hits);
    let cfg = GnnConfig::uniform(AggregatorKind::Gcn, &[3, 2], Activation::Relu).with_hop_limits(vec![10]);
    let stack = GnnStack::new("gnn", cfg, g.relations()).unwrap();
    let mut s = ParamStore::new();
    stack.init(&mut s, &mut seeded_rng(1));
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let got = stack.forward(&b, &ctx, "c", Mode::Eval(0)).unwrap().data();
    let v = |n: &str| b.vector(ft.get(n).unwrap());
    let nb = [NeighborInput::new(v("a")), NeighborInput::new(v("b"))];
    let want = stack.layers[0].forward(&b, v("c"), &nb, SequenceOrder::Seeded(0)).unwrap().data();
    assert_eq!(got, want);
}

#[test]
fn stack_is_local_inductive_and_rejects_unknown_nodes() {
    let (g, mut ft) = star_graph();
    let hits = HitTables::compute(&g, &WalkConfig::default()).unwrap();
    let cfg = GnnConfig::uniform(AggregatorKind::Lstm, &[3, 4, 2], Activation::LeakyRelu);
    let stack = GnnStack::new("gnn", cfg, g.relations()).unwrap();
    let mut s = ParamStore::new();
    stack.init(&mut s, &mut seeded_rng(2));

    let before = {
        let ctx = GraphContext::new(&g, &ft, &hits);
        let out = stack.embed(&s, &ctx, &["c"], 9).unwrap();
        assert!(!ctx.trace().contains("far"));
        assert!(ctx.trace().contains("x"));
        out
    };
    ft.insert("far", vec![9.0, 9.0, 9.0]).unwrap();
    let ctx = GraphContext::new(&g, &ft, &hits);
    assert_eq!(stack.embed(&s, &ctx, &["c"], 9).unwrap(), before);
    assert!(matches!(stack.embed(&s, &ctx, &["nope"], 9), Err(Error::UnknownNode(_))));

    // A different graph with no shared nodes runs with the same parameters.
    let mut gb = Graph::builder();
    gb.add_edge("p", "isa", "q");
    let g2 = gb.build().make_bidirectional();
    let mut ft2 = FeatureTable::new(3);
    ft2.insert("p", vec![1.0, 0.0, 0.0]).unwrap();
    ft2.insert("q", vec![0.0, 1.0, 0.0]).unwrap();
    let hits2 = HitTables::compute(&g2, &WalkConfig::default()).unwrap();
    let ctx2 = GraphContext::new(&g2, &ft2, &hits2);
    assert_eq!(stack.embed(&s, &ctx2, &["p"], 9).unwrap()[0].len(), 2);
}

#[test]
fn config_validation() {
    let mut cfg = GnnConfig::uniform(AggregatorKind::Gcn, &[3, 4, 2], Activation::Relu);
    assert_eq!(cfg.hop_limits, [50, 100]);
    cfg.layers[1].in_dim = 5;
    assert!(GnnStack::new("g", cfg.clone(), &[]).is_err());
    cfg.layers[1].in_dim = 4;
    cfg.hop_limits.pop();
    assert!(GnnStack::new("g", cfg, &[]).is_err());
    assert_eq!("transformer".parse::<AggregatorKind>().unwrap(), AggregatorKind::Transformer);
    assert!("gin".parse::<AggregatorKind>().is_err());
}
