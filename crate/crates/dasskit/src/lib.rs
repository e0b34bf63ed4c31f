//! Policy compression, distillation and reward-driven refinement on
//! desk-scale limit-cycle control tasks.
//!
//! The pipeline: train a tracking policy with PPO, capture it as a dataset
//! of (state, mean action) tuples collected while the stochastic policy
//! runs, compress or combine policies by supervised regression on such
//! datasets, and refine behaviors under new rewards while anchoring the
//! update to the previous policy's tuples.

pub mod dass;
pub mod distill;
pub mod env;
pub mod error;
pub mod eval;
pub mod net;
pub mod policy;
pub mod ppo;
pub mod refine;
pub mod rng;
pub mod scalar;
pub mod textio;

mod test_util;

pub use error::{Error, Result};
pub use policy::{GaussianPolicy, Provenance};
pub use scalar::Scalar;

/// Concrete `f64` instantiations of the generic numerical core. All training
/// and serialization in this crate run in 64-bit floats.
pub type Mlp = net::Mlp<f64>;
pub type Gradients = net::Gradients<f64>;
pub type AdamState = net::AdamState<f64>;
