//! Heterogeneous graph convolution on simplicial complexes.
//!
//! Node and edge signals are filtered with Hodge-Laplacian spectral filters
//! whose spectra are expanded in Laguerre polynomials, pooled with a
//! topology-driven coarsening, and fed through a small trainable network.
//!
//! Module map:
//! - [`complex`]: simplicial complexes and boundary operators
//! - [`laplacian`]: Hodge-Laplacians and the dense spectral oracle
//! - [`filters`]: Laguerre filter banks and localization
//! - [`pooling`]: Graclus matching, coarsening and signal pooling
//! - [`layers`]: differentiable layers and the full model
//! - [`train`]: Adam, synthetic data, fitting and saliency
//! - [`cli`]: command implementations behind the `hodgeconv` binary

pub mod cli;
pub mod complex;
pub mod error;
pub mod filters;
pub mod io;
pub mod layers;
pub mod laplacian;
pub mod pooling;
pub mod train;
pub mod signal;
pub mod sparse;

pub use complex::{BoundaryOperator, SimplicialComplex};
pub use error::{Error, Result};
pub use filters::{filter_support, laguerre_apply, laguerre_eval, FilterBank};
pub use laplacian::{hodge_laplacian, spectral_decompose, spectral_filter_reference, HodgeLaplacian};
pub use signal::SimplexSignal;
