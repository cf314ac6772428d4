use rand::Rng;

use super::{canonical, AggregatorLayer, NeighborInput};
use crate::autodiff::{stack, Binder, ParamStore, Tensor, Var};
use crate::{Error, Result};

pub(super) fn init(layer: &AggregatorLayer, store: &mut ParamStore, rng: &mut impl Rng) {
    let c = &layer.config;
    for basis in 0..c.bases {
        store.glorot(layer.param_name(&format!("v{basis}")), c.out_dim, c.in_dim, rng);
    }
    store.insert(
        layer.param_name("coeff"),
        crate::autodiff::glorot(layer.relations.len(), c.bases, rng),
    );
    store.glorot(layer.param_name("w_self"), c.out_dim, c.in_dim, rng);
}

/// Sets the basis coefficients to the identity, so with `B = |R|` each
/// relation owns basis `r` as its weight.
pub fn identity_coefficients(layer: &AggregatorLayer, store: &mut ParamStore) -> Result<()> {
    let (r, nb) = (layer.relations.len(), layer.config.bases);
    if r != nb {
        return Err(Error::Config(format!(
            "{}: identity coefficients need B = |R|, got B={nb}, |R|={r}",
            layer.prefix
        )));
    }
    let data = (0..r * r).map(|i| if i / r == i % r { 1.0 } else { 0.0 }).collect();
    store.insert(layer.param_name("coeff"), Tensor::matrix(r, r, data)?);
    Ok(())
}

pub(super) fn forward<'t>(
    layer: &AggregatorLayer,
    b: &Binder<'t, '_>,
    self_feat: Var<'t>,
    neighbors: &[NeighborInput<'t>],
) -> Result<Var<'t>> {
    let mut groups: Vec<Vec<Var<'t>>> = vec![Vec::new(); layer.relations.len()];
    for n in canonical(neighbors) {
        if n.relations.is_empty() {
            return Err(Error::Contract(format!(
                "{}: RGCN neighbour without a relation tag",
                layer.prefix
            )));
        }
        for rel in &n.relations {
            let r = layer
                .relations
                .iter()
                .position(|x| x == rel)
                .ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
            groups[r].push(n.feat);
        }
    }
    let coeff = b.param(&layer.param_name("coeff"))?;
    let bases = (0..layer.config.bases)
        .map(|i| b.param(&layer.param_name(&format!("v{i}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut h = b.param(&layer.param_name("w_self"))?.matmul(self_feat)?;
    for (r, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        // 1/c_{i,r} normalization is the mean over the relation's members.
        let m = stack(group)?.mean(Some(0))?;
        let projected = bases.iter().map(|v| v.matmul(m)).collect::<Result<Vec<_>>>()?;
        h = h.add(coeff.row(r)?.matmul(stack(&projected)?)?)?;
    }
    Ok(layer.config.activation.apply(h))
}
