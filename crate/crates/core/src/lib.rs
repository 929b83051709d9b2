//! Step functions with a large mixed-derivative ratio, their smoothing, and the
//! stationary Fokker-Planck-Kolmogorov densities built from them, with exact
//! rational checks and grid-based numerical checks.

pub mod error;
pub mod fpk;
pub mod grid;
pub mod kernel;
pub mod mollify;
pub mod ornstein;
pub mod pipeline;
pub mod rational;
pub mod spectral;
pub mod step;
pub mod weakform;

pub use error::{Error, Result};
pub use rational::Rational;
