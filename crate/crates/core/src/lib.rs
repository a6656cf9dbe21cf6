//! Causal graphs of monotone couplings between time-dependent parameters.
//!
//! A [`graph::Graph`] states which parameters influence each other and how
//! (integrative, synchronous or differential couplings, summators and
//! modulators) while leaving every coupling's shape open. [`calibration`]
//! fits those shapes to recorded time series, turning the graph into a
//! [`network::Model`]; [`predictor`] then solves the model forward in time.

pub mod calibration;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod monotone;
pub mod network;
pub mod predictor;
pub mod simulate;

pub use error::{Error, Result};
