//! Sparse linear dynamical systems.
//!
//! Learning of `z_t = A z_{t-1} + e_t`, `y_t = C z_t + v_t` by MAP-EM with a
//! Laplace (l1) prior on the transition matrix, Kalman/RTS inference,
//! multi-step forecasting, and the AMAE forecasting benchmark used to compare
//! sparse and ordinary models over a range of hidden-state counts.

pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod forecasting;
pub mod inference;
pub mod learning;
pub mod linalg;
pub mod model;

pub use error::{Result, SldsError};
pub use learning::{em_fit, FitConfig, FitDiagnostics};
pub use model::{ModelParams, ObservationSequence, StateSequence};

/// Derive an independent stream seed from a base seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
