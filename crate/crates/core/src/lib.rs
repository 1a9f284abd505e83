//! Small-variance asymptotics for hierarchical Dirichlet process models.
//!
//! The crate has three layers:
//!
//! * [`combinatorics`] — exact log-space CRP/CRF partition probabilities,
//!   unsigned Stirling numbers of the first kind, and exhaustive
//!   enumeration oracles for small instances;
//! * [`objectives`], [`hdp_means`], [`sva_hmm`] — the penalized objectives
//!   that arise in the small-variance limit of the HDP mixture and the
//!   HDP-HMM, with coordinate-descent optimizers for all three;
//! * [`asymptotics`] — the limits themselves made executable: exact
//!   finite-precision log joints, scaled by `−1/β_s` and tracked against
//!   the objectives along a precision grid.
//!
//! Everything numeric is generic over the [`Real`] scalar (`f32` or `f64`);
//! the `*64` aliases below fix the common choice.

pub mod asymptotics;
pub mod combinatorics;
mod error;
pub mod hdp_means;
pub mod objectives;
mod options;
mod scalar;
pub mod special;
pub mod sva_hmm;

pub use error::{Error, Result};
pub use options::FitOptions;
pub use scalar::{log_sum_exp, log_sum_exp_pair, Real};

/// `f64` aliases for the main domain types.
pub type Hyperparams64 = objectives::Hyperparams<f64>;
pub type GroupedDataset64 = objectives::GroupedDataset<f64>;
pub type SequenceDataset64 = objectives::SequenceDataset<f64>;
pub type GroupedClustering64 = objectives::GroupedClustering<f64>;
pub type HmmSolution64 = objectives::HmmSolution<f64>;
pub type HmmDirectSolution64 = objectives::HmmDirectSolution<f64>;
pub type Concentrations64 = combinatorics::Concentrations<f64>;
pub type LogProb64 = combinatorics::LogProb<f64>;
pub type PrecisionGrid64 = asymptotics::PrecisionGrid<f64>;
pub type ConvergenceReport64 = asymptotics::ConvergenceReport<f64>;
