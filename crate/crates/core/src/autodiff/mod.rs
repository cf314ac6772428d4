//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records one forward pass. Parameters live in a
//! [`ParamStore`] and are bound to tape leaves through a [`Binder`]; after
//! [`Binder::backward`] the per-name gradients feed [`Adam`]. Broadcasting is
//! limited to matrix-vector products and adding a row bias to a matrix.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{
    analytic_gradients, compare_gradients, grad_check, objective, GradCheckConfig, GradCheckReport, ParamCheck,
};
pub use optim::{Adam, AdamConfig};
pub use params::{glorot, seeded_rng, Binder, ParamStore};
pub use tape::{concat, stack, Gradients, Tape, Var, DEFAULT_LEAKY_SLOPE};
pub use tensor::Tensor;
