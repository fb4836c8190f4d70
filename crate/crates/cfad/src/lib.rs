//! Covariance-based device-activity detection for cell-free massive MIMO
//! with hybrid near/far-field channels.
//!
//! The library is organized around the simulation pipeline:
//!
//! - [`scenario`]: seeded construction of the physical experiment (AP/device
//!   placement on a wrap-around square, signature sequences, ground truth).
//! - [`channel`]: per-(AP, device) channel statistics, channel sampling and
//!   received-signal synthesis, plus the low-rank Kronecker factors the
//!   likelihood is built from.
//! - [`solver`]: per-AP coordinate-descent solver (quartic surrogate, cubic
//!   closed form, exact Sherman-Morrison-Woodbury state maintenance) and the
//!   centralized baseline.
//! - [`consensus`]: the distributed orchestration loop (CPU broadcast,
//!   parallel AP updates, dual ascent, closed-form consensus update) with
//!   fronthaul accounting.
//! - [`analysis`]: identifiability diagnostics (column cosine similarities,
//!   orthogonality bound, null-space probing).
//! - [`harness`]: Monte-Carlo driver, PM/PF threshold sweeps, equal-error
//!   extraction, and the experiment presets behind the CLI.

pub mod analysis;
pub mod channel;
pub mod consensus;
pub mod harness;
pub mod rng;
pub mod scenario;
pub mod solver;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("problem size LK = {lk} exceeds the dense-oracle cap {cap}")]
    OracleCapExceeded { lk: usize, cap: usize },
    #[error("nonfinite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("AP {ap}: {source}")]
    Ap {
        ap: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
