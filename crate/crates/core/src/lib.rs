//! Natural-gradient variational inference for Gaussian posteriors.
//!
//! The crate provides the Gaussian exponential family in natural, expectation
//! and moment coordinates, Monte Carlo and quadrature gradient estimators,
//! the CVI, VOGN, Bayes-by-Backprop and natural-parameter SGD update rules,
//! site-parameter bookkeeping, dataset loaders and an experiment runner.

pub mod data;
pub mod error;
pub mod expfam;
pub mod gradients;
pub mod harness;
pub mod linalg;
pub mod local_approx;
pub mod models;
pub mod optimizers;
pub mod quadrature;

pub use error::{Error, Result};
pub use expfam::{FlatVec, Mode, NaturalParams};
