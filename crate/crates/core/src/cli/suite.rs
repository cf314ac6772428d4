//! Gradient checks over every tape op, aggregator, encoder and head on
//! randomized small shapes.

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::aggregators::{AggregatorKind, AggregatorLayer, LayerConfig, NeighborInput, SequenceOrder};
use crate::autodiff::{
    concat, grad_check, objective, seeded_rng, stack, Binder, GradCheckConfig, GradCheckReport, ParamStore, Tensor, Var,
};
use crate::encoders::{AttentiveNer, BiLstmAttention, FeatureMode, MentionInput, TokenSeq};
use crate::kg::EmbeddingTable;
use crate::nn::Activation;
use crate::zeroshot::BilinearHead;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteCase {
    pub group: &'static str,
    pub name: String,
    pub seed: u64,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<SuiteCase>,
    pub passed: bool,
    pub max_rel_error: f64,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &SuiteCase> {
        self.cases.iter().filter(|c| !c.report.passed)
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("sized")
}

fn values(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `Σ w ⊙ v` with fixed random weights, so no gradient is trivially uniform.
fn weighted<'t>(b: &Binder<'t, '_>, v: Var<'t>, w: &Tensor) -> Result<Var<'t>> {
    Ok(v.mul(b.constant(w.clone()))?.sum_all())
}

type OpFn = for<'t, 'p> fn(&Binder<'t, 'p>) -> Result<Var<'t>>;

/// Ops under test. Every entry reads params `a` [3,4], `c` [4,2], `v` [4],
/// `s` [1] and returns a tensor that is reduced with weights of its shape.
fn ops() -> Vec<(&'static str, OpFn)> {
    vec![
        ("matmul", |b| b.param("a")?.matmul(b.param("c")?)),
        ("matvec", |b| b.param("a")?.matmul(b.param("v")?)),
        ("vecmat", |b| b.param("v")?.matmul(b.param("c")?)),
        ("add", |b| b.param("a")?.add(b.param("a")?.tanh())),
        ("add_row_bias", |b| b.param("a")?.add(b.param("v")?)),
        ("sub", |b| b.param("v")?.sub(b.param("a")?.row(1)?)),
        ("mul", |b| b.param("a")?.mul(b.param("a")?.sigmoid())),
        ("scale", |b| Ok(b.param("a")?.scale(-1.7))),
        ("scale_by", |b| b.param("a")?.scale_by(b.param("s")?)),
        ("recip", |b| b.param("s")?.mul(b.param("s")?)?.add(b.constant(Tensor::vector(vec![0.5])))?.recip()),
        ("transpose", |b| b.param("a")?.transpose()),
        ("row", |b| b.param("a")?.row(2)),
        ("slice", |b| b.param("v")?.slice(1, 2)),
        ("sum_rows", |b| b.param("a")?.sum(Some(0))),
        ("sum_cols", |b| b.param("a")?.sum(Some(1))),
        ("mean_rows", |b| b.param("a")?.mean(Some(0))),
        ("mean_all", |b| b.param("a")?.mean(None)),
        ("sum_all", |b| Ok(b.param("c")?.sum_all())),
        ("dot", |b| b.param("v")?.dot(b.param("a")?.row(0)?)),
        ("softmax_rows", |b| b.param("a")?.softmax(1)),
        ("softmax_cols", |b| b.param("a")?.softmax(0)),
        ("sigmoid", |b| Ok(b.param("a")?.sigmoid())),
        ("tanh", |b| Ok(b.param("a")?.tanh())),
        ("relu", |b| Ok(b.param("a")?.relu())),
        ("leaky_relu", |b| Ok(b.param("a")?.leaky_relu(0.2))),
        ("exp", |b| Ok(b.param("a")?.exp())),
        ("log", |b| Ok(b.param("a")?.sigmoid().log())),
        ("cross_entropy", |b| b.param("v")?.cross_entropy(2)),
        ("binary_cross_entropy", |b| b.param("v")?.binary_cross_entropy(&[1.0, 0.0, 0.0, 1.0])),
        ("l2_loss", |b| b.param("v")?.l2_loss(b.param("a")?.row(0)?.tanh())),
        ("layer_norm", |b| {
            let v = b.param("v")?;
            b.param("a")?.layer_norm(v.scale(0.5).exp(), v.tanh(), 1e-5)
        }),
        ("concat_vectors", |b| concat(&[b.param("v")?, b.param("s")?], 0)),
        ("concat_rows", |b| concat(&[b.param("a")?, b.param("c")?.transpose()?], 0)),
        ("concat_cols", |b| concat(&[b.param("a")?.transpose()?, b.param("c")?], 1)),
        ("stack", |b| stack(&[b.param("v")?, b.param("a")?.row(1)?.tanh()])),
    ]
}

fn op_cases(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<SuiteCase>> {
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    store.insert("a", uniform(&mut rng, &[3, 4], -1.0, 1.0));
    store.insert("c", uniform(&mut rng, &[4, 2], -1.0, 1.0));
    store.insert("v", uniform(&mut rng, &[4], -1.0, 1.0));
    store.insert("s", uniform(&mut rng, &[1], 0.5, 1.5));
    let mut out = Vec::new();
    for (name, op) in ops() {
        let shape = {
            let tape = crate::autodiff::Tape::new();
            let b = Binder::new(&tape, &store);
            op(&b)?.shape()
        };
        let w = uniform(&mut rng, &shape, -1.0, 1.0);
        let f = objective(|b| {
            let y = op(b)?;
            weighted(b, y, &w)
        });
        out.push(SuiteCase {
            group: "op",
            name: name.to_string(),
            seed,
            report: grad_check(&f, &store, cfg)?,
        });
    }
    Ok(out)
}

fn aggregator_cases(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<SuiteCase>> {
    let mut rng = seeded_rng(seed ^ 0xA66);
    let relations = vec!["r0".to_string(), "r1".to_string()];
    let mut out = Vec::new();
    for kind in AggregatorKind::ALL {
        // half width 1 makes the transformer's layer norm constant and
        // parks its feed-forward ReLU on the kink
        let d_in = if kind == AggregatorKind::Transformer { rng.random_range(4..=6) } else { rng.random_range(2..=5) };
        let d_out = rng.random_range(2..=4);
        let n = rng.random_range(1..=4);
        let activation = [Activation::Relu, Activation::LeakyRelu, Activation::Identity][rng.random_range(0..3)];
        let config = LayerConfig::new(kind, d_in, d_out)
            .with_activation(activation)
            .with_bases(rng.random_range(1..=2));
        let layer = AggregatorLayer::new("agg", config, relations.clone())?;
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut rng);
        let me = values(&mut rng, d_in);
        let nbrs: Vec<(Vec<f64>, Vec<&str>)> = (0..n)
            .map(|i| {
                let rels = match i % 3 {
                    0 => vec!["r0"],
                    1 => vec!["r1"],
                    _ => vec!["r0", "r1"],
                };
                (values(&mut rng, d_in), rels)
            })
            .collect();
        let w = uniform(&mut rng, &[d_out], -1.0, 1.0);
        let order_seed = rng.next_u64();
        let f = objective(|b| {
            let inputs: Vec<NeighborInput> = nbrs
                .iter()
                .map(|(x, r)| NeighborInput::with_relations(b.vector(x), r))
                .collect();
            let h = layer.forward(b, b.vector(&me), &inputs, SequenceOrder::Seeded(order_seed))?;
            weighted(b, h, &w)
        });
        out.push(SuiteCase {
            group: "aggregator",
            name: kind.name().to_string(),
            seed,
            report: grad_check(&f, &store, cfg)?,
        });
    }
    Ok(out)
}

fn vocabulary(rng: &mut impl Rng, dim: usize) -> Result<EmbeddingTable> {
    let mut emb = EmbeddingTable::new(dim, 0);
    for t in ["w0", "w1", "w2", "w3", "w4"] {
        emb.insert(t, values(rng, dim))?;
    }
    Ok(emb)
}

fn words(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.random_range(0..5))).collect()
}

fn encoder_cases(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<SuiteCase>> {
    let mut rng = seeded_rng(seed ^ 0xE2C);
    let dim = rng.random_range(2..=4);
    let emb = vocabulary(&mut rng, dim)?;
    let mut out = Vec::new();

    let sent = BiLstmAttention::new("s", dim, rng.random_range(2..=3), rng.random_range(2..=4));
    let mut store = ParamStore::new();
    sent.init(&mut store, &mut rng);
    let n = rng.random_range(1..=4);
    let tokens = TokenSeq::new(&words(&mut rng, n));
    let w = uniform(&mut rng, &[sent.out_dim()], -1.0, 1.0);
    let f = objective(|b| weighted(b, sent.encode(b, &emb, &tokens)?, &w));
    out.push(SuiteCase {
        group: "encoder",
        name: "bilstm_attention".into(),
        seed,
        report: grad_check(&f, &store, cfg)?,
    });

    let features = FeatureMode::Learned { vocab: 4, dim: 2 };
    let ment = AttentiveNer::new("m", dim, rng.random_range(2..=3), rng.random_range(2..=4), features);
    let mut store = ParamStore::new();
    ment.init(&mut store, &mut rng);
    let (nm, nl, nr) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3));
    let mut x = MentionInput::new(&words(&mut rng, nm), &words(&mut rng, nl), &words(&mut rng, nr), 5);
    x.feature_ids = vec![rng.random_range(0..4), rng.random_range(0..4)];
    let w = uniform(&mut rng, &[ment.out_dim()], -1.0, 1.0);
    let f = objective(|b| weighted(b, ment.encode(b, &emb, &x)?, &w));
    out.push(SuiteCase {
        group: "encoder",
        name: "attentive_ner".into(),
        seed,
        report: grad_check(&f, &store, cfg)?,
    });
    Ok(out)
}

fn head_cases(seed: u64, cfg: &GradCheckConfig) -> Result<Vec<SuiteCase>> {
    let mut rng = seeded_rng(seed ^ 0x4EAD);
    let (dt, dp, h) = (rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(1..=3));
    let classes = rng.random_range(2..=4);
    let head = BilinearHead::new("head", dt, dp, h);
    let mut store = ParamStore::new();
    head.init(&mut store, &mut rng);
    store.insert("theta", uniform(&mut rng, &[dt], -1.0, 1.0));
    store.insert("phis", uniform(&mut rng, &[classes, dp], -1.0, 1.0));
    let target = rng.random_range(0..classes);
    let f = objective(|b| {
        let scores = head.scores(b, b.param("theta")?, b.param("phis")?)?;
        scores.cross_entropy(target)
    });
    let mut out = vec![SuiteCase {
        group: "head",
        name: "bilinear".into(),
        seed,
        report: grad_check(&f, &store, cfg)?,
    }];

    let mut store = ParamStore::new();
    store.insert("proj", uniform(&mut rng, &[dt, dp], -1.0, 1.0));
    store.insert("phi", uniform(&mut rng, &[dp], -1.0, 1.0));
    let t = values(&mut rng, dt);
    let f = objective(|b| {
        let phi = b.param("proj")?.matmul(b.param("phi")?)?.tanh();
        phi.l2_loss(b.vector(&t))
    });
    out.push(SuiteCase {
        group: "head",
        name: "l2".into(),
        seed,
        report: grad_check(&f, &store, cfg)?,
    });
    Ok(out)
}

/// Runs every case for each seed.
pub fn gradient_suite(seeds: &[u64], cfg: &GradCheckConfig) -> Result<SuiteReport> {
    let mut cases = Vec::new();
    for &seed in seeds {
        cases.extend(op_cases(seed, cfg)?);
        cases.extend(aggregator_cases(seed, cfg)?);
        cases.extend(encoder_cases(seed, cfg)?);
        cases.extend(head_cases(seed, cfg)?);
    }
    let max_rel_error = cases.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    Ok(SuiteReport {
        passed: cases.iter().all(|c| c.report.passed),
        max_rel_error,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_covers_all_groups_and_passes() {
        let r = gradient_suite(&[0, 1, 2], &GradCheckConfig::default()).unwrap();
        for group in ["op", "aggregator", "encoder", "head"] {
            assert!(r.cases.iter().any(|c| c.group == group), "{group}");
        }
        assert_eq!(r.cases.iter().filter(|c| c.group == "aggregator").count(), 15);
        let bad: Vec<_> = r.failures().map(|c| (&c.name, c.report.max_rel_error)).collect();
        assert!(r.passed, "{bad:?}");
    }
}
