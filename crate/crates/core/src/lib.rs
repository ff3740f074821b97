//! Graph-based warm/cold hybrid recommendation: random-walk pooled warm
//! representations scored by inner product, and feature-driven patching
//! networks for users and items without interaction history.

pub mod cli;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
mod formats;
pub mod graph;
pub mod gwarmer;
pub mod linalg;
pub mod patching;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod train;
pub mod workdir;

pub use error::{GnpError, Result};
