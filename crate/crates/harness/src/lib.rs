// validation guards use `!(x > y)` so that NaN inputs fail them too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Experiment harness: configuration, orchestration of the experiment kinds
//! (validate, single_index, emergence, scaling, compute_optimal, init_gaps),
//! and report/plot/CSV emission for the `hermite-flow` CLI.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod plot;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hermite_flow_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
