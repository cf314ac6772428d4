use rand::Rng;

use super::{members, seeded_permutation, AggregatorLayer, NeighborInput, SequenceOrder};
use crate::autodiff::{concat, Binder, ParamStore, Var};
use crate::nn::Lstm;
use crate::{Error, Result};

pub(super) fn cell(layer: &AggregatorLayer) -> Lstm {
    let d = layer.config.in_dim;
    Lstm::new(layer.param_name("lstm"), d, d)
}

fn combine_in(layer: &AggregatorLayer) -> usize {
    let d = layer.config.in_dim;
    if layer.config.self_concat { 2 * d } else { d }
}

pub(super) fn init(layer: &AggregatorLayer, store: &mut ParamStore, rng: &mut impl Rng) {
    cell(layer).init(store, rng);
    store.glorot(layer.param_name("w"), layer.config.out_dim, combine_in(layer), rng);
}

pub(super) fn forward<'t>(
    layer: &AggregatorLayer,
    b: &Binder<'t, '_>,
    self_feat: Var<'t>,
    neighbors: &[NeighborInput<'t>],
    order: SequenceOrder<'_>,
) -> Result<Var<'t>> {
    let seq = members(self_feat, neighbors);
    let perm = match order {
        SequenceOrder::Explicit(p) => {
            let mut seen = vec![false; seq.len()];
            if p.len() != seq.len() || !p.iter().all(|&i| i < seq.len() && !std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Contract(format!(
                    "{}: {p:?} is not a permutation of 0..{}",
                    layer.prefix,
                    seq.len()
                )));
            }
            p.to_vec()
        }
        SequenceOrder::Seeded(seed) => seeded_permutation(seq.len(), seed),
    };
    let ordered: Vec<Var<'t>> = perm.iter().map(|&i| seq[i]).collect();
    let states = cell(layer).run(b, &ordered)?;
    let a = *states.last().expect("sequence includes self");
    let input = if layer.config.self_concat { concat(&[self_feat, a], 0)? } else { a };
    let h = b.param(&layer.param_name("w"))?.matmul(input)?;
    Ok(layer.config.activation.apply(h))
}
