//! Evaluation toolkit for perturbation-based GNN explainers.
//!
//! The crate is `no_std` (it needs `alloc`) and covers everything that is pure
//! computation: the BA-Shapes and Tree-Cycles generators ([`synth`]), a
//! from-scratch graph convolutional network with hand-written backprop
//! ([`gcn`]), a soft edge-mask explainer ([`explainer`]), ranking and set
//! metrics ([`metrics`]), motif search for prediction-preserving ground truth
//! ([`motif`]) and thresholding with label-flip repair ([`threshold`]).
//!
//! File formats, the pipeline runner and the command line live in the `gnnx`
//! crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod explainer;
pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod motif;
pub mod optim;
pub mod synth;
pub mod threshold;

mod propagate;

pub use error::{Error, Result};
pub use explainer::{EdgeMask, ExplainConfig, Explainer};
pub use gcn::{GcnModel, TrainConfig};
pub use graph::{Edge, EdgeSubset, Graph, NodeId, Role};
pub use linalg::Matrix;
