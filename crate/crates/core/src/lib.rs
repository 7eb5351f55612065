//! Robust boundary flow control for traffic links and networks governed by the
//! LWR model with a triangular fundamental diagram.

pub mod constraints;
pub mod ctm;
pub mod error;
pub mod fd;
pub mod lax_hopf;
pub mod link_models;
pub mod lp;
pub mod monte_carlo;
pub mod network;
pub mod scenario;
pub mod value_conditions;

pub use error::{Error, Result};
