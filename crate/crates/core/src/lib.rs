//! Spectral solver for `i u_t + a(t) L^s u = f` with `L = -d^2/dx^2 + q` on
//! `(0,1)` under Dirichlet conditions, plus epsilon-regularization
//! experiments for singular coefficients and data.

pub mod catalog;
pub mod config;
pub mod error;
pub mod evolution;
pub mod function_space;
pub mod output;
pub mod regularization;
pub mod runner;
pub mod sl_spectral;
pub mod spectral_transform;
pub mod vws;

pub use error::{Error, Result};
