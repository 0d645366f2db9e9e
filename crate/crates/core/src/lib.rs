//! Fiber-taper probing of planar photonic-crystal waveguides.
//!
//! Fiber modes, effective-index plane-wave bands of a graded line defect,
//! coupled-mode transmission between the two, and the forward/inverse
//! transmission-map pipeline.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod config;
pub mod coupling;
pub mod error;
pub mod fiber;
pub mod lattice;
pub mod linalg;
pub mod overlap;
pub mod pipeline;
pub mod pwe;
pub mod slab;
pub mod taper;

pub use error::{Error, Result};
