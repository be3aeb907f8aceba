//! Exact arithmetic over frozen floating-point travel times.
//!
//! Every finite `f64` is a dyadic rational, so a frozen travel time converts
//! losslessly to an arbitrary-precision rational. The Wardropian property of a
//! cycle is an exact identity (summed deviations equal zero), and the balanced
//! ordering guarantees rational prefix-mean bounds; verifying either in
//! floating point would demote theorems to tolerance judgements. The helpers
//! here do the lossless conversion and the handful of aggregate operations the
//! validators need, plus an integer fast path for the common case of
//! integer-valued times.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

/// Lossless conversion of a finite `f64` to a rational.
///
/// # Panics
/// Panics on NaN or infinity. Travel times are validated finite when path
/// sets are constructed, so a non-finite value reaching exact arithmetic is a
/// logic error, not an input error.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(|| panic!("non-finite value {x} in exact arithmetic"))
}

/// Σ count_k · t_k as an exact rational.
pub fn weighted_time_sum(counts: &[u64], times: &[f64]) -> BigRational {
    debug_assert_eq!(counts.len(), times.len());
    let mut acc = BigRational::zero();
    for (&c, &t) in counts.iter().zip(times) {
        if c > 0 {
            acc += rational(t) * BigRational::from_integer(BigInt::from(c));
        }
    }
    acc
}

/// Exact mean Σ count_k · t_k / Σ count_k.
///
/// # Panics
/// Panics if all counts are zero.
pub fn weighted_mean(counts: &[u64], times: &[f64]) -> BigRational {
    let total: u64 = counts.iter().sum();
    assert!(total > 0, "weighted_mean of an empty multiset");
    weighted_time_sum(counts, times) / BigRational::from_integer(BigInt::from(total))
}

/// If every value is integer-valued and safely inside 2^52, return the exact
/// integer vector. Callers use this to run prefix-sum checks in `i128`
/// instead of allocating rationals.
pub fn integer_values(values: &[f64]) -> Option<Vec<i64>> {
    values
        .iter()
        .map(|&t| {
            (t.is_finite() && t.fract() == 0.0 && t.abs() <= f64::powi(2.0, 52)).then_some(t as i64)
        })
        .collect()
}
