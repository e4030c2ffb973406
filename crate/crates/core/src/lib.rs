//! Probabilistic neural programs.
//!
//! A program sketch mixes a differentiable computation graph with weighted
//! nondeterministic choice: graph nodes score each choice, and the choices
//! decide which nodes get built. Beam search over executions turns a sketch
//! into a distribution, and loglikelihood training fits the graph's
//! parameters from pairs of unconditional and conditional sketches.
//!
//! The [`foodweb`] module applies this to executing food-web queries over
//! noisy diagram detections, and [`harness`] holds the synthetic data
//! generator, metrics, and file formats used by the `pnp` binary.

pub mod demo;
pub mod foodweb;
pub mod graph;
pub mod harness;
pub mod inference;
pub mod sketch;
pub mod tensor;
pub mod training;

pub use graph::{Graph, GraphError, Gradients, NodeKind, NodeRef, ParamSet};
pub use inference::{beam_search, enumerate, marginalize, Distribution, Entry, InferenceError};
pub use sketch::{choose, choose_scores, constant, param, pure, require, ChoiceTag, Sketch, SketchError, Step};
pub use tensor::{Tensor, TensorError};
