//! Simulation toolkit for decentralized LLM swarms that reach consensus
//! through pairwise Bradley–Terry judging, reputation weighting and collusion
//! defenses, plus a semantic partition tree for query routing.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bt;
pub mod cli;
pub mod config;
pub mod mesh;
pub mod reputation;
pub mod scheduler;
pub mod sim;
pub mod sweep;
pub mod sybil;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}
