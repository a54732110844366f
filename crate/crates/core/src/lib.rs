//! Uncertainty estimation for dropout-trained classifiers.
//!
//! A trained network with `N₀` maskable hidden units defines `2^N₀` thinned
//! sub-networks. Each thinned network `i` has a loss `Lᵢ` on a given sample
//! and a size `Nᵢ` (kept units). This crate puts the Gibbs measure
//!
//! ```text
//! pᵢ = exp(-(β·Lᵢ + η·Nᵢ)) / Z
//! ```
//!
//! over that ensemble and estimates the loss variance under it with a
//! Metropolis–Hastings chain ([`sampler`]). Tiny networks can be enumerated
//! exactly ([`gibbs`]), which is what the sampler is validated against.
//! The variance estimates then drive reject-option and confidence-band
//! ROC analysis ([`eval`]).

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gibbs;
pub mod landscape;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
pub use gibbs::{GibbsParams, OracleResult};
pub use nn::{Activation, DenseLayer, DropoutMask, Network, Sample};
pub use sampler::{ChainConfig, LossOracle, LossTrace, ProposalKernel, UncertaintyReport};
pub use trainer::{Dataset, Split, TrainConfig};
