//! Stationary measures of randomly perturbed degree-two circle maps.
//!
//! The objects of study are an intermittent circle map T with a neutral
//! fixed point at 0, its saddle-node unfolding f_t, and their random
//! compositions under two noise modes (additive and parametric). The crate
//! provides the maps themselves, annealed and deterministic Ulam transfer
//! matrices, Wasserstein and total-variation comparisons of stationary
//! measures, seeded Monte Carlo sampling with reproducible parallel
//! reductions, and entropy, distortion, and expansion diagnostics.

pub mod circle;
pub mod diagnostics;
pub mod dynamics;
mod error;
pub mod measures;
pub mod perturbation;
mod quadrature;
pub mod sampling;
pub mod transfer;

pub use error::{Error, Result};
