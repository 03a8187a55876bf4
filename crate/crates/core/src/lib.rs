//! Sequential kernelized tests of semantic importance by betting.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery:
//!
//! - [`kernels`]: linear and RBF kernels with quantile bandwidth rules.
//! - [`betting`]: wealth processes and the online Newton step bettor.
//! - [`payoffs`]: MMD plug-in payoffs for the marginal, conditional and local tests.
//! - [`samplers`]: conditional samplers (weighted KDE, nearest-neighbour embeddings).
//! - [`testers`]: the three sequential test drivers.
//! - [`multiplicity`]: greedy FDR post-processing and rank/importance metrics.
//! - [`synthetic`]: data-generating processes with exact conditionals.
//!
//! File formats, the CLI and experiment orchestration live in the `betkit` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod matrix;

pub mod betting;
pub mod kernels;
pub mod multiplicity;
pub mod payoffs;
pub mod samplers;
pub mod synthetic;
pub mod testers;

pub use error::{Error, Result};
pub use matrix::{normalize_unit, Matrix};
