//! Dynamical variable-separation reduced models for parameter-dependent
//! evolution equations.
//!
//! The offline stage ([`offline::run_offline`]) builds a separated
//! approximation `u_N(x, t; ξ) = Σ ζ_k(t; ξ) g_k(x, t)` greedily over a
//! training set; the online stage ([`online::online_zetas`]) evaluates the
//! coefficients at a new parameter from stored scalars only.

pub mod benchmarks;
pub mod cli;
pub mod config;
pub mod discretization;
pub mod error;
pub mod estimator;
pub mod fom;
pub mod linalg;
pub mod model;
pub mod offline;
pub mod online;
pub mod persist;
pub mod problem;
pub mod record;
pub mod report;
pub mod vs;

pub use error::{DvsError, Result};
