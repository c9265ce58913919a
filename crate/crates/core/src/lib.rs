//! Latency-controlled RAN slicing simulator with a model-aware UCB bandit
//! (LACO) and classic baselines.

pub mod config;
pub mod dtmc;
pub mod env;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod engine;
pub mod policy;

pub use error::{Error, Result};
