//! Kernel density estimation with discrepancy-based coresets.
//!
//! This crate answers queries of the form `K(P, q) = Σ_{p ∈ P} G(‖p − q‖²)`
//! for smooth, positive-definite radial kernels `G`, using a recursive
//! ball-carving partition tree whose shells are summarized by coresets built
//! with a self-balancing signing walk over kernel feature embeddings.
//!
//! The crate is organized bottom-up:
//!
//! * [`core`] — points, datasets, build parameters, shell geometry.
//! * [`kernels`] — radial kernel families and the truncated transform `Ψ`.
//! * [`embedding`] — shell-scaled feature embeddings, reduced to `Ψ` calls.
//! * [`balance`] — the self-balancing walk and repeated-halving coresets.
//! * [`carving`] — the randomized three-valued ball-carving hash.
//! * [`farfield`] — geometric rings of coresets for distant queries.
//! * [`tree`] — the partition tree tying everything together.
//! * [`oracle`] — brute-force references used by tests and self-checks.

pub mod balance;
pub mod carving;
pub mod core;
pub mod embedding;
mod error;
pub mod farfield;
pub mod kernels;
pub mod oracle;
pub mod tree;

pub use error::{Error, Result};
