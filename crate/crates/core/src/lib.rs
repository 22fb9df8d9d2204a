//! f-divergence mutual information, Jeffreys priors and the asymptotic
//! limit functional for parametric Bayesian models, with constrained
//! reference-prior search.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod fdiv;
pub mod ids;
pub mod model;
pub mod prior;
pub mod quadrature;
pub mod refsearch;
pub mod sampling;
pub mod special;

pub use error::{Error, Result};
