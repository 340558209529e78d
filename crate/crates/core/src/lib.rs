//! One-shot optimization with rescaled Gaussian designs.
//!
//! Low-discrepancy or random points in the unit cube are mapped through the
//! normal quantile and shrunk by a budget- and dimension-dependent σ. The
//! crate provides the design generators, the scaling rules, benchmark
//! objectives, the analytical regret tools, a replicated benchmark harness
//! and a differential-evolution driver that uses these designs as its
//! initial population.

pub mod de_opt;
pub mod error;
pub mod gaussianize;
pub mod harness;
pub mod io;
pub mod objectives;
pub mod seed;
pub mod seq_gen;
pub mod special;
pub mod stats;

pub use error::{Error, Result};

/// The guide's chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/designs.md")]
    mod designs {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    mod scaling {}
    #[doc = include_str!("../../../book/src/regret.md")]
    mod regret {}
    #[doc = include_str!("../../../book/src/probability.md")]
    mod probability {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/de.md")]
    mod de {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
