//! Offline reinforcement learning with weight-space behavior constraining.
//!
//! The crate covers the full offline pipeline:
//!
//! - [`env`]: the MiniIB surrogate plant, its baseline controllers and
//!   ε-greedy dataset generation,
//! - [`data`]: datasets, history windows, splitting and the binary file format,
//! - [`nn`]: dense and recurrent kernels, backpropagation through time and Adam,
//! - [`dynamics`]: recurrent transition-model ensembles trained with an
//!   overshooting loss, and conservative (min-over-ensemble) rollouts,
//! - [`behavior`]: behavior cloning of the data-generating policy,
//! - [`search`]: particle swarm policy search inside a per-weight box around
//!   the clone, plus the action-space-penalty alternative,
//! - [`eval`]: ground-truth evaluation, percentile statistics and rank
//!   aggregation,
//! - [`pipeline`]: file-backed, hash-chained runs used by the `wsbc` binary.
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod behavior;
pub mod data;
pub mod dynamics;
pub mod env;
mod error;
pub mod eval;
mod jsonfile;
mod linalg;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod search;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/rollouts.md")]
    mod rollouts {}
    #[doc = include_str!("../../../book/src/behavior.md")]
    mod behavior {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
