//! Streaming regime discovery with time-evolving causal structure.
//!
//! A multivariate stream is demixed into independent signals, each signal
//! is modelled as a small linear dynamical system in delay coordinates, and
//! the demixing matrix doubles as a linear non-Gaussian SEM from which a
//! causal adjacency is read off at every tick.

pub mod causal;
pub mod cli;
pub mod dynamics;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod ica;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
