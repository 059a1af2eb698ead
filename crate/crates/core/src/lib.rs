//! Symbol-gated neural networks.
//!
//! A context-dependent processing network turns a short real-valued symbol
//! into multiplicative gains for the neurons of a task-solving classifier.
//! Symbols and network parameters are trained in alternating phases; new
//! classes can then be acquired by optimizing a symbol alone, transferred
//! between agents through a learned translator, and the resulting symbol
//! sets analysed with average-linkage dendrograms.

mod binio;
mod error;

pub mod analysis;
pub mod cli;
pub mod comms;
pub mod data_io;
pub mod gated_net;
pub mod grad_core;
pub mod symbolic;
pub mod trainer;

pub use error::{Error, Result};
