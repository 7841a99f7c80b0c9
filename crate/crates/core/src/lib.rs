//! Finite-size key rates of Gaussian continuous-variable QKD over
//! satellite-to-ground optical downlinks.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 0.0)` also rejects NaN.

pub mod cli;
pub mod downlink;
pub mod error;
pub mod gaussian;
pub mod keyrate;
pub mod optimize;
pub mod pass;
mod special;

pub use error::{Error, Result};
