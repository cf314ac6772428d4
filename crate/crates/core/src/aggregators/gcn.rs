use rand::Rng;

use super::{members, AggregatorLayer, NeighborInput};
use crate::autodiff::{stack, Binder, ParamStore, Var};
use crate::Result;

pub(super) fn init(layer: &AggregatorLayer, store: &mut ParamStore, rng: &mut impl Rng) {
    let c = &layer.config;
    store.glorot(layer.param_name("w"), c.out_dim, c.in_dim, rng);
}

pub(super) fn forward<'t>(
    layer: &AggregatorLayer,
    b: &Binder<'t, '_>,
    self_feat: Var<'t>,
    neighbors: &[NeighborInput<'t>],
) -> Result<Var<'t>> {
    let mean = stack(&members(self_feat, neighbors))?.mean(Some(0))?;
    let h = b.param(&layer.param_name("w"))?.matmul(mean)?;
    Ok(layer.config.activation.apply(h))
}
