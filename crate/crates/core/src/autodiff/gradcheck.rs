use std::collections::BTreeMap;

use serde::Serialize;

use super::{Binder, ParamStore, Tape, Tensor, Var};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tol: f64,
    /// Denominator floor of the relative error, so gradients that are zero
    /// up to rounding are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-3,
            floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Pins a closure to the higher-ranked objective signature used by the
/// gradient checker, which closure inference cannot infer on its own.
pub fn objective<F>(f: F) -> F
where
    F: for<'t, 'p> Fn(&Binder<'t, 'p>) -> Result<Var<'t>>,
{
    f
}

fn eval_loss<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: for<'t, 'p> Fn(&Binder<'t, 'p>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let b = Binder::new(&tape, store);
    Ok(f(&b)?.item())
}

/// Loss value and reverse-mode gradients of every parameter in `store`.
pub fn analytic_gradients<F>(f: &F, store: &ParamStore) -> Result<(f64, BTreeMap<String, Tensor>)>
where
    F: for<'t, 'p> Fn(&Binder<'t, 'p>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let b = Binder::new(&tape, store);
    let loss = f(&b)?;
    let value = loss.item();
    let mut grads = b.backward(loss)?;
    for (name, t) in store.iter() {
        grads
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(t.shape()));
    }
    Ok((value, grads))
}

/// Compares `analytic` against central finite differences of `f`.
pub fn compare_gradients<F>(
    f: &F,
    store: &ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: for<'t, 'p> Fn(&Binder<'t, 'p>) -> Result<Var<'t>>,
{
    let mut work = store.clone();
    let mut params = Vec::new();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let n = store.require(&name)?.numel();
        let zeros = Tensor::zeros(store.require(&name)?.shape());
        let a = analytic.get(&name).unwrap_or(&zeros);
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for i in 0..n {
            let orig = work.require(&name)?.data()[i];
            work.get_mut(&name).expect("present").data_mut()[i] = orig + cfg.step;
            let plus = eval_loss(f, &work)?;
            work.get_mut(&name).expect("present").data_mut()[i] = orig - cfg.step;
            let minus = eval_loss(f, &work)?;
            work.get_mut(&name).expect("present").data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let ai = a.data()[i];
            let abs = (ai - numeric).abs();
            let rel = abs / ai.abs().max(numeric.abs()).max(cfg.floor);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(abs);
        }
        params.push(ParamCheck {
            name,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error <= cfg.tol,
        max_rel_error,
        params,
    })
}

/// Checks reverse-mode gradients of `f` against central differences for
/// every parameter in `store`. Failures are reported, not raised.
pub fn grad_check<F>(f: &F, store: &ParamStore, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: for<'t, 'p> Fn(&Binder<'t, 'p>) -> Result<Var<'t>>,
{
    let (_, analytic) = analytic_gradients(f, store)?;
    compare_gradients(f, store, &analytic, cfg)
}
