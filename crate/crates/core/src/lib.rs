//! Diffusion-cascade network embedding.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`sampler`] simulates a step-synchronous diffusion from every node and
//!    records first-infection timestamps inside an observation window.
//! 2. [`inference`] recovers a nonnegative transmission-rate matrix from the
//!    cascades by minimizing the exponential-model negative log-likelihood.
//! 3. [`embedding`] row-normalizes the rate matrix and factors it with a
//!    truncated SVD; node vectors are `U_d * sqrt(Sigma_d)`.
//! 4. [`evaluation`] scores the embedding on node classification with
//!    one-vs-rest logistic regression and Micro/Macro-F1.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature enables
//! `std::error::Error` through `thiserror`; `parallel` adds rayon-backed
//! parallel loops whose results are identical to the sequential ones.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod rng;
pub mod sampler;

mod par;

pub use embedding::{embed, normalize_rates, truncated_svd, Embedding, Normalization, SvdResult};
pub use error::{Error, Result};
pub use evaluation::{evaluate, f1_scores, EvalConfig, EvalReport};
pub use graph::{Graph, GraphBuilder, LabelTable};
pub use inference::{infer_rates, RateMatrix, SolverConfig};
pub use sampler::{Cascade, CascadeSet, DiffusionTrace, TimeModel};
