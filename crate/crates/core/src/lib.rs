//! Gamma and Dirichlet random measures on a discretized manifold, their
//! derivative calculus and Dirichlet forms, and numerical spectral-gap tools.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

pub mod error;
pub mod forms;
pub mod manifold;
pub mod measure;
pub mod sampling;
pub mod special;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
