use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Tape, Tensor, Var};
use crate::{Error, Result};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform Glorot initialization on `±sqrt(6 / (fan_in + fan_out))` for a
/// `(rows, cols)` weight, where `cols` is the fan-in.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

/// Named parameters of a model, ordered by name.
///
/// The JSON form is the checkpoint format: a map from parameter name to
/// `{shape, data}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) {
        self.insert(name, glorot(rows, cols, rng));
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.insert(name, Tensor::filled(shape, 1.0));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Data(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Copies in every parameter of `other`, replacing same-named entries.
    pub fn extend(&mut self, other: ParamStore) {
        self.params.extend(other.params);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.params)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self {
            params: serde_json::from_str(text)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Binds stored parameters to leaves of one tape, lazily and at most once
/// per name, so every use of a parameter shares a single leaf.
pub struct Binder<'t, 'p> {
    tape: &'t Tape,
    store: &'p ParamStore,
    bound: RefCell<BTreeMap<String, Var<'t>>>,
}

impl<'t, 'p> Binder<'t, 'p> {
    pub fn new(tape: &'t Tape, store: &'p ParamStore) -> Self {
        Self {
            tape,
            store,
            bound: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn param(&self, name: &str) -> Result<Var<'t>> {
        if let Some(v) = self.bound.borrow().get(name) {
            return Ok(*v);
        }
        let t = self.store.require(name)?.clone();
        let v = self.tape.param(t);
        self.bound.borrow_mut().insert(name.to_string(), v);
        Ok(v)
    }

    pub fn constant(&self, t: Tensor) -> Var<'t> {
        self.tape.constant(t)
    }

    pub fn vector(&self, data: &[f64]) -> Var<'t> {
        self.tape.vector(data)
    }

    /// Gradients of every parameter bound during the forward pass.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.bound
            .borrow()
            .iter()
            .map(|(name, v)| (name.clone(), grads.get_or_zeros(*v)))
            .collect()
    }

    /// Backward from `loss`, returning per-parameter gradients.
    pub fn backward(&self, loss: Var<'t>) -> Result<BTreeMap<String, Tensor>> {
        let g = self.tape.backward(loss)?;
        Ok(self.param_grads(&g))
    }
}
