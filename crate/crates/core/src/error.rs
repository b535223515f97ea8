use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Which of the two policies a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRole {
    Behavior,
    Target,
}

impl fmt::Display for PolicyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyRole::Behavior => f.write_str("behavior"),
            PolicyRole::Target => f.write_str("target"),
        }
    }
}

/// A single broken invariant of an evaluation problem. Indices are 0-based;
/// `step` is the 0-based timestep.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TransitionRowSum { state: usize, action: usize, sum: f64 },
    NegativeTransition { state: usize, action: usize, next: usize, value: f64 },
    RewardOutOfRange { step: usize, state: usize, action: usize, value: f64 },
    InitialDistSum { sum: f64 },
    NegativeInitial { state: usize, value: f64 },
    PolicyRowSum { policy: PolicyRole, state: usize, sum: f64 },
    NegativePolicy { policy: PolicyRole, state: usize, action: usize, value: f64 },
    DiscountOutOfRange { value: f64 },
    AbsorbingNotSelfLoop { state: usize, action: usize },
    AbsorbingReward { step: usize, state: usize, action: usize, value: f64 },
    AbsoluteContinuity { state: usize, action: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            TransitionRowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            NegativeTransition { state, action, next, value } => {
                write!(f, "p({next}|{state},{action}) = {value} is negative")
            }
            RewardOutOfRange { step, state, action, value } => {
                write!(f, "reward r_{step}({state},{action}) = {value} outside [0,1]")
            }
            InitialDistSum { sum } => write!(f, "initial distribution sums to {sum}"),
            NegativeInitial { state, value } => {
                write!(f, "initial probability of state {state} is negative ({value})")
            }
            PolicyRowSum { policy, state, sum } => {
                write!(f, "{policy} policy row for state {state} sums to {sum}")
            }
            NegativePolicy { policy, state, action, value } => {
                write!(f, "{policy} policy has negative entry ({state},{action}) = {value}")
            }
            DiscountOutOfRange { value } => write!(f, "discount {value} outside [0,1]"),
            AbsorbingNotSelfLoop { state, action } => {
                write!(f, "absorbing state {state} does not self-loop under action {action}")
            }
            AbsorbingReward { step, state, action, value } => {
                write!(f, "absorbing state {state} pays {value} at step {step} under action {action}")
            }
            AbsoluteContinuity { state, action } => write!(
                f,
                "target takes action {action} in reachable state {state} where behavior never does"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("invalid problem: {}", join(.0))]
    InvalidProblem(Vec<Violation>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("behavior policy never takes action {action} in state {state} (step {step})")]
    SupportViolation { step: usize, state: usize, action: usize },

    #[error(
        "target occupancy is positive where behavior occupancy is zero (step {step}, state {state}, action {action})"
    )]
    SisSupport { step: usize, state: usize, action: usize },

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e}); \
         the induced chain is likely periodic or reducible"
    )]
    StationaryNotConverged { iterations: usize, residual: f64 },

    #[error("{paths} trajectories exceed the enumeration cap of {cap}; use the moment DP instead")]
    EnumerationCap { paths: f64, cap: u64 },

    #[error("need at least {needed} trajectories, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = OpeError> = std::result::Result<T, E>;
