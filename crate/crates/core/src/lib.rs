//! CPU scene-flow stack on sparse permutohedral lattices.
//!
//! The crate builds up in layers: [`lattice`] owns the geometry (hyperplane
//! embedding, enclosing simplices, the occupied-key hash index), [`bclops`]
//! the differentiable splat/conv/slice primitives, [`layers`] the
//! downsampling, upsampling and two-cloud correlation blocks, [`model`] the
//! hourglass flow network with its training loop, [`data`] synthetic scene
//! generation and file formats, and [`metrics`] the evaluation suite.
//! [`oracle`] holds deliberately naive reference implementations used by
//! the self-test and acceptance suites.

pub mod bclops;
pub mod data;
pub mod error;
pub mod lattice;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod params;
pub mod signal;
pub mod util;

pub use error::{Error, Result};
pub use signal::SignalMatrix;
