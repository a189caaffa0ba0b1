//! Multifractal tube volumes of self-similar measures.
//!
//! The crate computes the exponents `α(q) ≤ β(q)`, multifractal Minkowski
//! volumes of r-neighbourhoods, the symbolic volume built from cut sets,
//! the associated zeta functions with their poles and residues, and the
//! reconstructions of the volume from those poles.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod exponents;
pub mod ifs;
pub mod numeric;
pub mod symbolic;
pub mod tube;
pub mod zeta;

pub use error::{Error, Result};
pub use ifs::{SelfSimilarSystem, SimilarityMap, Word};
