use rand::Rng;

use super::{members, AggregatorLayer, NeighborInput};
use crate::autodiff::{concat, stack, Binder, ParamStore, Var};
use crate::nn::Linear;
use crate::Result;

const LN_EPS: f64 = 1e-5;

struct Block {
    proj_in: Linear,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ff1: Linear,
    ff2: Linear,
    proj_out: Linear,
    half: usize,
}

fn block(layer: &AggregatorLayer) -> Block {
    let d = layer.config.in_dim;
    let half = d / 2;
    let lin = |name: &str, i, o| Linear::new(layer.param_name(name), i, o, true);
    Block {
        proj_in: lin("proj_in", d, half),
        q: lin("q", half, half),
        k: lin("k", half, half),
        v: lin("v", half, half),
        o: lin("o", half, half),
        ff1: lin("ff1", half, half),
        ff2: lin("ff2", half, half),
        proj_out: lin("proj_out", half, d),
        half,
    }
}

fn combine_in(layer: &AggregatorLayer) -> usize {
    let d = layer.config.in_dim;
    if layer.config.self_concat { 2 * d } else { d }
}

pub(super) fn init(layer: &AggregatorLayer, store: &mut ParamStore, rng: &mut impl Rng) {
    let blk = block(layer);
    for lin in [&blk.proj_in, &blk.q, &blk.k, &blk.v, &blk.o, &blk.ff1, &blk.ff2, &blk.proj_out] {
        lin.init(store, rng);
    }
    for ln in ["ln1", "ln2"] {
        store.ones(layer.param_name(&format!("{ln}.gain")), &[blk.half]);
        store.zeros(layer.param_name(&format!("{ln}.bias")), &[blk.half]);
    }
    store.glorot(layer.param_name("w"), layer.config.out_dim, combine_in(layer), rng);
}

fn norm<'t>(layer: &AggregatorLayer, b: &Binder<'t, '_>, name: &str, x: Var<'t>) -> Result<Var<'t>> {
    let gain = b.param(&layer.param_name(&format!("{name}.gain")))?;
    let bias = b.param(&layer.param_name(&format!("{name}.bias")))?;
    x.layer_norm(gain, bias, LN_EPS)
}

pub(super) fn forward<'t>(
    layer: &AggregatorLayer,
    b: &Binder<'t, '_>,
    self_feat: Var<'t>,
    neighbors: &[NeighborInput<'t>],
) -> Result<Var<'t>> {
    let blk = block(layer);
    // Rows are [self, canonical neighbours]; there is no positional
    // encoding, so row order only matters for float summation order.
    let x = blk.proj_in.forward_rows(b, stack(&members(self_feat, neighbors))?)?;

    let n1 = norm(layer, b, "ln1", x)?;
    let (q, k, v) = (
        blk.q.forward_rows(b, n1)?,
        blk.k.forward_rows(b, n1)?,
        blk.v.forward_rows(b, n1)?,
    );
    let attn = q
        .matmul(k.transpose()?)?
        .scale(1.0 / (blk.half as f64).sqrt())
        .softmax(1)?
        .matmul(v)?;
    let x = x.add(blk.o.forward_rows(b, attn)?)?;

    let n2 = norm(layer, b, "ln2", x)?;
    let ff = blk.ff2.forward_rows(b, blk.ff1.forward_rows(b, n2)?.relu())?;
    let x = x.add(ff)?;

    let pooled = blk.proj_out.forward_rows(b, x)?.mean(Some(0))?;
    let input = if layer.config.self_concat { concat(&[self_feat, pooled], 0)? } else { pooled };
    let h = b.param(&layer.param_name("w"))?.matmul(input)?;
    Ok(layer.config.activation.apply(h))
}
