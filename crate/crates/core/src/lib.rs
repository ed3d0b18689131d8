//! Adaptive sampling for low-rank matrix completion and approximation.
//!
//! * [`completion`]: one-pass adaptive completion of an exactly low-rank
//!   matrix, reading a few entries per column plus a handful of full columns.
//! * [`approximation`]: two-pass adaptive approximation that allocates
//!   samples by estimated column energy, and the uniform passive baseline.
//! * [`subspace`]: the subsampled projection test behind both, and its
//!   deviation bounds.
//! * [`instances`]: coherence-controlled synthetic matrices and the hard
//!   family for passive sampling.
//! * [`oracle`]: the query-counting gateway through which algorithms read
//!   entries.
//! * [`metrics`]: error reports computed against the ground truth.
//!
//! Indices are 0-based throughout. Every random routine takes an explicit
//! [`rng::Rng`].

pub mod approximation;
pub mod completion;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod subspace;

pub use error::{Error, Result};

/// Dense column-major real matrix.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
