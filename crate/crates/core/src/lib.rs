//! Inductive zero-shot learning over knowledge graphs.
//!
//! Class representations are produced by a graph neural network run over
//! each class node's neighborhood in a multi-relational knowledge graph.
//! Neighborhoods are ranked by random-walk hit probability and truncated to
//! the most visited nodes, then summarized by one of five aggregators:
//! mean (GCN), attention (GAT), relational with basis decomposition (RGCN),
//! or the non-linear LSTM and transformer set aggregators. Example encoders
//! and a low-rank bilinear (or L2) head couple examples to classes, so a
//! trained model can score classes that had no training examples and can
//! run on graphs it never saw during training.
//!
//! # Layout
//!
//! ```text
//! kg           assertion-file ingestion, prefix union, k-hop queries, node features
//! sampler      random walks, add-one smoothed hit tables, top-N truncation
//! autodiff     dense f64 tensors, reverse-mode tape, Adam, gradient checking
//! nn           linear maps, LSTM, activations
//! aggregators  GCN / GAT / RGCN / LSTM / transformer layers and the k-hop stack
//! encoders     biLSTM-attention sentence encoder, AttentiveNER mention encoder
//! zeroshot     bilinear and L2 heads, training loops, prediction
//! eval         strict accuracy, micro/macro fold metrics, top-k accuracy
//! cli          run configs, synthetic benchmark generator, subcommand driver
//! ```
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod aggregators;
pub mod autodiff;
pub mod cli;
pub mod encoders;
mod error;
pub mod eval;
pub mod kg;
pub mod nn;
pub mod sampler;
pub mod zeroshot;

pub use error::{Error, Result};
