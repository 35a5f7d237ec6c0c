//! Generalized solutions of evolution inclusions driven by maximal monotone
//! operators, deterministic inputs and Q-Wiener noise.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod asymptotics;
pub mod cli;
pub mod det_solver;
pub mod error;
pub mod hspace;
pub mod monotone_ops;
pub mod rng;
pub mod sde_solver;
mod serde_ext;
pub mod stochastic;

pub use error::{Error, Result};
