//! Spatially "Mt. Fuji" coupled LDPC ensembles over the binary erasure channel.
//!
//! The crate covers the whole pipeline: exact ensemble sizing
//! ([`ensemble`]), random Tanner graph sampling with short-cycle removal
//! ([`sampler`]), erasure channel simulation with peeling and belief
//! propagation decoders ([`decoder`]), the mean-field and covariance
//! evolution of the peeling process ([`evolution`]), the Q-function
//! waterfall predictor ([`predict`]) and experiment orchestration
//! ([`harness`]).

pub mod decoder;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod predict;
pub mod sampler;
pub mod stats;

pub use ensemble::{
    connection_law, position_profile, position_profile_with, solve_construction, Alpha,
    ConnectionLaw, EnsembleParams, PositionProfile, Rounding,
};
pub use error::{Error, Result};
