//! Generation, breaking and evaluation of unlearnable image datasets at desk scale.
//!
//! The crate covers three stages:
//!
//! * [`poison`]: perturbation generators (error-maximizing, error-minimizing,
//!   synthetic patch noise, autoregressive noise, one-pixel shortcuts).
//! * [`transforms`] and [`breaker`]: the nonlinear transformation catalog, the
//!   greedy transformation search, orthogonal projection and adversarial training.
//! * [`model`]: small classifiers with manual backpropagation used for every
//!   training and evaluation step.

pub mod breaker;
pub mod dataset;
pub mod error;
pub mod image;
pub mod linalg;
pub mod model;
pub mod par;
pub mod poison;
pub mod rng;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
