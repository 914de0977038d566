//! Closed-loop Bayesian adaptive sensing for frequency estimation driven by
//! Weiss–Weinstein bounds.

pub mod control;
pub mod error;
pub mod filter;
pub mod optim;
pub mod priors;
pub mod signal;
pub mod sim;
pub mod surrogate;
pub mod wwb;

pub use error::{Error, Result, TestPointError};
