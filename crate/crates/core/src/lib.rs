//! Consensus-based decentralized maximum-likelihood estimation of a scalar
//! parameter in an amplify-and-forward sensor network, together with a
//! cyclic optimizer for the complex sensor gains.
//!
//! Module map:
//!
//! - [`topology`]: connected communication graphs and random generators.
//! - [`network`]: channels, noise statistics, gains and local models.
//! - [`fusion`]: broadcast compression and the centralized ML estimator.
//! - [`consensus`]: ADMM average consensus and the decentralized estimator.
//! - [`optimizer`]: gain optimization by cyclic minimization.
//! - [`experiment`]: seeded scenario generation, runs and the self-check.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod network;
pub mod optimizer;
pub mod topology;

pub use error::{Error, Result};
pub use num_complex::Complex64;
