//! Uncertainty-driven iterative corpus sampling for unsupervised retriever
//! domain adaptation.
//!
//! The crate is `no_std` + `alloc`: every stage is a pure computation over
//! in-memory values. File formats, the command line and external model
//! providers live in the companion `unite` crate.
//!
//! Pipeline, in order:
//!
//! 1. [`corpus`]: tokenize documents and collect lexical term statistics.
//! 2. [`lexical`]: BM25 inverted index, document-as-query k-NN distances.
//! 3. [`au_filter`]: drop lexical outliers by modified z-score.
//! 4. [`eu`]: epistemic uncertainty from a model's vocabulary distribution.
//! 5. [`sampler`]: k-means clusters, resampling-penalty budgets, MMR picks.
//! 6. [`control`]: the iterative score / stop / sample / update loop.
//!
//! [`sim`] provides a synthetic corpus and a toy trainable model so the
//! whole loop runs without neural networks.

#![no_std]
// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod au_filter;
pub mod control;
pub mod corpus;
pub mod error;
pub mod eu;
pub mod kmeans;
pub mod lexical;
pub mod sampler;
pub mod sim;
pub mod stats;
pub mod tokenizer;

pub use error::{Error, Result};
