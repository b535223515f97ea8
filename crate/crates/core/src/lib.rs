//! Tabular off-policy evaluation lab.
//!
//! Importance-sampling estimators (IS, PDIS, SIS, ASIS, RCIS) for
//! finite-horizon tabular MDPs, with exact oracles for their sampling
//! distributions and moments, checks of the sufficient conditions for
//! their variance orderings, and horizon-scaling experiments.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod conditions;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod io;
mod linalg;
pub mod mdp;
pub mod montecarlo;
pub mod occupancy;
pub mod scalar;
pub mod scenarios;
pub mod sweeps;

pub use error::{OpeError, Result, Violation};
pub use estimators::{EstimatorId, EstimatorKind};
pub use scalar::Scalar;

pub type Mdp = mdp::TabularMdp<f64>;
pub type Policy = mdp::PolicyTable<f64>;
pub type Problem = mdp::EvaluationProblem<f64>;
pub type Trajectory = mdp::Trajectory<f64>;
pub type Weights = estimators::WeightTable<f64>;
pub type Estimator = estimators::EstimatorKind<f64>;
pub type Moments = exact::MomentReport<f64>;
pub type Occupancy = occupancy::OccupancyTables<f64>;
