//! Grand-canonical bosonic Gibbs states on truncated Fock spaces, their
//! Husimi measures, and the classical nonlinear Gibbs measures they approach
//! in the mean-field limit.

pub mod classical;
pub mod error;
pub mod fock;
pub mod gibbs;
pub mod husimi;
pub mod kernel;
pub mod lab;
pub mod linalg;
pub mod operator;
pub mod quadrature;
pub mod sparse;
pub mod spectrum;
pub mod state;
pub mod stats;
pub mod symmetric;

pub use error::{LabError, Result};
