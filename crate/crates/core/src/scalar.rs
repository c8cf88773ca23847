//! Scalar abstraction for the analytic side of the crate.
//!
//! Probability tables, transition matrices, and the linear solvers are
//! generic over [`Scalar`]. `f32`/`f64` give the fast floating-point mode;
//! [`BigRational`] gives the exact mode in which every table entry is an
//! arbitrary-precision rational and comparisons are equality, not tolerance.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive};

/// Numeric type of a probability table.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// The scalar with value `num / den`. `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Largest residual magnitude accepted as zero when validating a
    /// recurrence or a linear solve. Zero for exact scalars.
    fn tolerance() -> Self;

    /// Lossy `f64` view, for reports and error messages.
    fn approx(&self) -> f64;

    /// True when arithmetic in this scalar carries no rounding error.
    fn is_exact() -> bool;

    /// Column headers used when a value named `name` is dumped to CSV.
    /// Exact scalars dump numerator and denominator separately.
    fn csv_headers(name: &str) -> Vec<String>;

    /// CSV cells for this value, matching [`Scalar::csv_headers`].
    fn csv_cells(&self) -> Vec<String>;
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        debug_assert!(den != 0);
        num as f64 / den as f64
    }

    fn tolerance() -> Self {
        1e-10
    }

    fn approx(&self) -> f64 {
        *self
    }

    fn is_exact() -> bool {
        false
    }

    fn csv_headers(name: &str) -> Vec<String> {
        vec![name.to_string()]
    }

    fn csv_cells(&self) -> Vec<String> {
        vec![format!("{self}")]
    }
}

impl Scalar for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        debug_assert!(den != 0);
        num as f32 / den as f32
    }

    fn tolerance() -> Self {
        1e-4
    }

    fn approx(&self) -> f64 {
        f64::from(*self)
    }

    fn is_exact() -> bool {
        false
    }

    fn csv_headers(name: &str) -> Vec<String> {
        vec![name.to_string()]
    }

    fn csv_cells(&self) -> Vec<String> {
        vec![format!("{self}")]
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn tolerance() -> Self {
        BigRational::from_integer(BigInt::from(0))
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_exact() -> bool {
        true
    }

    fn csv_headers(name: &str) -> Vec<String> {
        vec![format!("{name}_num"), format!("{name}_den")]
    }

    fn csv_cells(&self) -> Vec<String> {
        vec![self.numer().to_string(), self.denom().to_string()]
    }
}
