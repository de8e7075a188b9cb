//! Privacy-aware cross-domain recommendation.
//!
//! A source-domain interaction log is distilled into per-user transferred
//! representations that boost a target-domain recommender. A simulated
//! attribute-inference attacker is trained against those representations,
//! and its loss regularizes the recommender so that the transferred
//! knowledge stays useful for ranking while revealing as little as
//! possible about private user attributes.
//!
//! The numeric kernel ([`nn`]) is generic over the scalar type; the rest
//! of the crate works with the concrete [`Real`] aliases below.

pub mod checkpoint;
pub mod data;
pub mod defenses;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod report;
mod rng;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the trained models. 64-bit keeps the
/// finite-difference gradient checks tight.
pub type Real = f64;

/// Dense tensor over [`Real`].
pub type Tensor = nn::TensorBase<Real>;
/// Gradient tape over [`Real`].
pub type Tape = nn::TapeBase<Real>;
/// Adam state over [`Real`].
pub type AdamState = nn::AdamStateBase<Real>;
