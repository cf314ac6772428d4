//! Parameterized building blocks shared by aggregators and encoders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Binder, ParamStore, Var, DEFAULT_LEAKY_SLOPE};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Negative slope 0.2.
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply<'t>(self, v: Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => v.relu(),
            Activation::LeakyRelu => v.leaky_relu(DEFAULT_LEAKY_SLOPE),
            Activation::Identity => v,
        }
    }
}

/// Affine map `W x + b` with `W` of shape `(output, input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub prefix: String,
    pub input: usize,
    pub output: usize,
    pub bias: bool,
}

impl Linear {
    pub fn new(prefix: impl Into<String>, input: usize, output: usize, bias: bool) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            output,
            bias,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.glorot(self.weight_name(), self.output, self.input, rng);
        if self.bias {
            store.zeros(self.bias_name(), &[self.output]);
        }
    }

    /// Applies the map to one vector.
    pub fn forward<'t>(&self, b: &Binder<'t, '_>, x: Var<'t>) -> Result<Var<'t>> {
        let y = b.param(&self.weight_name())?.matmul(x)?;
        if self.bias {
            y.add(b.param(&self.bias_name())?)
        } else {
            Ok(y)
        }
    }

    /// Applies the map to every row of a `(n, input)` matrix.
    pub fn forward_rows<'t>(&self, b: &Binder<'t, '_>, x: Var<'t>) -> Result<Var<'t>> {
        let y = x.matmul(b.param(&self.weight_name())?.transpose()?)?;
        if self.bias {
            y.add(b.param(&self.bias_name())?)
        } else {
            Ok(y)
        }
    }
}

/// Single-layer LSTM with gate order (input, forget, candidate, output) and
/// a zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let h4 = 4 * self.hidden;
        store.glorot(self.name("w_ih"), h4, self.input, rng);
        store.glorot(self.name("w_hh"), h4, self.hidden, rng);
        store.zeros(self.name("bias"), &[h4]);
    }

    /// Zeroes every weight and bias; the hidden state then stays zero.
    pub fn init_zeros(&self, store: &mut ParamStore) {
        let h4 = 4 * self.hidden;
        store.zeros(self.name("w_ih"), &[h4, self.input]);
        store.zeros(self.name("w_hh"), &[h4, self.hidden]);
        store.zeros(self.name("bias"), &[h4]);
    }

    /// Hidden state after each element of `inputs`.
    pub fn run<'t>(&self, b: &Binder<'t, '_>, inputs: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let w_ih = b.param(&self.name("w_ih"))?;
        let w_hh = b.param(&self.name("w_hh"))?;
        let bias = b.param(&self.name("bias"))?;
        let hd = self.hidden;
        let mut h = b.vector(&vec![0.0; hd]);
        let mut c = b.vector(&vec![0.0; hd]);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let gates = w_ih.matmul(x)?.add(w_hh.matmul(h)?)?.add(bias)?;
            let i = gates.slice(0, hd)?.sigmoid();
            let f = gates.slice(hd, hd)?.sigmoid();
            let g = gates.slice(2 * hd, hd)?.tanh();
            let o = gates.slice(3 * hd, hd)?.sigmoid();
            c = f.mul(c)?.add(i.mul(g)?)?;
            h = o.mul(c.tanh())?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Forward and backward [`Lstm`]s over the same sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm::new(format!("{prefix}.fwd"), input, hidden),
            bwd: Lstm::new(format!("{prefix}.bwd"), input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.fwd.init(store, rng);
        self.bwd.init(store, rng);
    }

    pub fn init_zeros(&self, store: &mut ParamStore) {
        self.fwd.init_zeros(store);
        self.bwd.init_zeros(store);
    }

    /// `[backward_t; forward_t]` for every position `t`.
    pub fn run<'t>(&self, b: &Binder<'t, '_>, inputs: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let f = self.fwd.run(b, inputs)?;
        let reversed: Vec<Var<'t>> = inputs.iter().rev().copied().collect();
        let mut r = self.bwd.run(b, &reversed)?;
        r.reverse();
        r.into_iter()
            .zip(f)
            .map(|(bw, fw)| concat(&[bw, fw], 0))
            .collect()
    }
}
