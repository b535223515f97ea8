//! Floating-point scalar abstraction.
//!
//! Every numeric routine in the crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The crate root re-exports `f64`
//! aliases of the main types; the `f32` instantiation exists for
//! memory-light sweeps and is exercised by the test suite.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Smallest tolerance that is meaningful at this precision. Requested
    /// tolerances below it are raised to it.
    const TOL_FLOOR: f64;

    /// Converts an `f64` literal. Panics only on values that cannot be
    /// represented at all, which never happens for finite literals.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// A tolerance adapted to this precision.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::lit(x.max(Self::TOL_FLOOR))
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const TOL_FLOOR: f64 = 0.0;
}

impl Scalar for f32 {
    const TOL_FLOOR: f64 = 1e-5;
}

/// Probability-sum tolerance used by the validity checks.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Tolerance for identities that hold exactly up to rounding
/// (occupancy normalization, unbiasedness, conditional weights).
pub const EXACT_TOL: f64 = 1e-10;

/// Tolerance for agreement between the enumeration and moment-DP oracles.
pub const ORACLE_TOL: f64 = 1e-9;

/// Covariances at or above `-COV_TOL` count as non-negative.
pub const COV_TOL: f64 = 1e-12;
