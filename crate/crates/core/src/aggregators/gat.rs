use rand::Rng;

use super::{members, AggregatorLayer, NeighborInput};
use crate::autodiff::{concat, stack, Binder, ParamStore, Var, DEFAULT_LEAKY_SLOPE};
use crate::Result;

pub(super) fn init(layer: &AggregatorLayer, store: &mut ParamStore, rng: &mut impl Rng) {
    let c = &layer.config;
    store.glorot(layer.param_name("w"), c.out_dim, c.in_dim, rng);
    let a = crate::autodiff::glorot(1, 2 * c.out_dim, rng);
    store.insert(layer.param_name("w_a"), crate::autodiff::Tensor::vector(a.into_data()));
}

pub(super) fn forward<'t>(
    layer: &AggregatorLayer,
    b: &Binder<'t, '_>,
    self_feat: Var<'t>,
    neighbors: &[NeighborInput<'t>],
) -> Result<Var<'t>> {
    let w = b.param(&layer.param_name("w"))?;
    let w_a = b.param(&layer.param_name("w_a"))?;
    let projected = members(self_feat, neighbors)
        .into_iter()
        .map(|h| w.matmul(h))
        .collect::<Result<Vec<_>>>()?;
    let center = projected[0];
    let scores = projected
        .iter()
        .map(|&p| w_a.dot(concat(&[p, center], 0)?))
        .collect::<Result<Vec<_>>>()?;
    let alpha = concat(&scores, 0)?.leaky_relu(DEFAULT_LEAKY_SLOPE).softmax(0)?;
    // [n] · [n, out] is the attention-weighted sum of projected members.
    let h = alpha.matmul(stack(&projected)?)?;
    Ok(layer.config.activation.apply(h))
}
