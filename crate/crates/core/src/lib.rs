//! Numerical regularity analysis for two elastic systems coupled through
//! fractional damping.
//!
//! The generator is block-diagonal over the shared eigenbasis of the
//! constituent operators, so every quantity reduces to 4×4 mode blocks:
//!
//! - [`spectral_model`]: spectra, symbols, mode blocks, hypothesis checks
//! - [`resolvent_probe`]: resolvent norms along the imaginary axis, decay
//!   exponent fits and analytic/Gevrey classification
//! - [`optimality_witness`]: the explicit unit-norm sequence with small
//!   residual that shows the Gevrey rate cannot be improved
//! - [`evolution`]: exact per-mode semigroup action, block spectra, smoothing
//! - [`dense_oracle`]: dense assembly used to cross-check the per-mode paths
//! - [`cli`]: the `resolvent-probe` command line

pub mod cli;
pub mod dense_oracle;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod optimality_witness;
pub mod resolvent_probe;
pub mod spectral_model;

pub use error::{Error, Result};
