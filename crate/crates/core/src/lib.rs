//! Random regular uniform hypergraphs from permutations.
//!
//! A permutation of the multiset with `d` copies of each of `1..=n`, cut into
//! consecutive blocks of size `k`, defines a `d`-regular `k`-multigraph.
//! Loops are removed by switchings with rejection so that the final simple
//! hypergraph is exactly uniform. Small instances can be counted by brute
//! force and checked against the asymptotic formula.

pub mod enumeration;
pub mod error;
pub mod exact;
pub mod generator;
mod json;
pub mod model;
pub mod params;
pub mod rng;
pub mod stats;
pub mod switching;

pub use error::{Error, Result};
pub use generator::{generate, generate_approx, Delta1Source, GenConfig, GenTrace, Generator, Mode};
pub use model::{build_multigraph, classify_perm, sample_permutation, Multigraph, PermSeq, Vertex};
pub use params::{CostGuard, LPolicy, Params};
