//! Smoothed posterior-sampling bandit for personalizing brushing prompts, and
//! the simulation testbed used to design it.
//!
//! The learning core (`features`, `reward`, `policy`) is generic over the
//! floating-point scalar; the aliases below fix it to `f64`, which the
//! simulation layers use throughout.

pub mod envmodel;
pub mod error;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod quadrature;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod simenv;

pub use error::{Error, Result};

pub type AlgStateF64 = features::AlgState<f64>;
pub type PriorSpecF64 = policy::PriorSpec<f64>;
pub type PosteriorF64 = policy::PosteriorState<f64>;
pub type SmoothingF64 = policy::SmoothingParams<f64>;
pub type CostParamsF64 = reward::CostParams<f64>;
