//! Compressive sensing of scalar fields on unstructured point clouds.
//!
//! Fields are compressed in situ with an implicit seeded Bernoulli sampling
//! matrix and reconstructed offline with discrete Alpert multiwavelets and
//! Stagewise Orthogonal Matching Pursuit.

pub mod basis;
pub mod bundle;
pub mod error;
pub mod fields;
pub mod generate;
pub mod hierarchy;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod sampler;
pub mod stomp;

pub use error::{Error, Result};
