//! Exact finite-sample regret of treatment rules under a quantile objective.
//!
//! The crate evaluates how far a rule's achieved outcome quantile falls below
//! the best attainable one, builds worst-case states of nature that attain
//! the maximal regret, and reproduces the grid simulation over discrete
//! states of nature.
//!
//! All numerics are generic over [`Scalar`]: use [`Exact`] rationals for
//! certification and `f64` for large sweeps.

pub mod adversary;
pub mod covariates;
pub mod dist;
pub mod engine;
pub mod error;
pub mod rules;
pub mod scalar;
pub mod simulator;
pub mod statespace;

pub use dist::{mix, parse_dist, DiscreteDist, Dist, MixedDist, QuantileSpec, Segment};
pub use engine::{Design, StateOfNature};
pub use error::{Error, Result};
pub use rules::{Sample, TreatmentRule};
pub use scalar::{Exact, Scalar};
