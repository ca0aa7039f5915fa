//! Optimal liquidation against a two-sided marked Hawkes order flow with
//! transient price impact.
//!
//! See the guide in `book/` for a walk-through.

pub mod error;
pub mod figure1;
pub mod hawkes;
pub mod market;
pub mod montecarlo;
pub mod pms;
pub mod quadrature;
pub mod special_functions;
pub mod strategy;

pub use error::{Error, Result};
