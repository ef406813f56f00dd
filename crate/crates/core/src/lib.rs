//! Numerical workbench for entanglement-assisted quantum rate-distortion
//! over Stinespring-parameterized encoder/decoder pairs.
//!
//! The crate is organized around a small dense linear-algebra core for
//! labeled multipartite systems ([`layout`], [`state`], [`linalg`]),
//! entropic functionals and continuity bounds ([`entropics`]), CPTP maps
//! as isometry-plus-discard ([`channels`]), distortion observables
//! ([`distortion`]), the rate-distortion and K-function optimizers
//! ([`rd`], [`kfun`]), and a property-test battery that replays the
//! entropy-inequality chains behind the converse bounds ([`verify`]).
//!
//! All sampling takes explicit seeds; multi-restart searches reduce with
//! order-independent minima so results are reproducible regardless of
//! worker scheduling. The `parallel` feature (default) runs independent
//! restarts and trials on a rayon pool; without it everything is
//! sequential.

pub mod channels;
pub mod distortion;
pub mod entropics;
pub mod exec;
pub(crate) mod fasteval;
pub mod kfun;
pub mod layout;
pub mod linalg;
pub mod optimize;
pub mod rd;
pub mod state;
pub mod verify;


use thiserror::Error;

/// Error type shared across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("register addressing error: {0}")]
    Addressing(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid isometry: {0}")]
    InvalidIsometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical corruption: {0}")]
    Numerical(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
