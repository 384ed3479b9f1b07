use std::fmt;
use std::ops::Neg;

use serde::{Deserialize, Serialize};

use super::NumericError;

/// Number of fractional bits in the Q16.16 representation.
pub const FRAC_BITS: u32 = 16;
/// Raw value of `1.0`.
pub const ONE_RAW: i32 = 1 << FRAC_BITS;

/// Signed Q16.16 fixed-point scalar.
///
/// Multiplication widens to 64 bits and truncates toward negative infinity
/// (arithmetic shift). Every fallible operation reports overflow instead of
/// wrapping.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
#[repr(transparent)]
pub struct FixedScalar(i32);

impl FixedScalar {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(ONE_RAW);
    /// Smallest positive value, `2^-16`.
    pub const EPSILON: Self = Self(1);
    pub const MAX: Self = Self(i32::MAX);
    pub const MIN: Self = Self(i32::MIN);

    pub const fn from_raw(raw: i32) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> i32 {
        self.0
    }

    pub const fn from_int(v: i16) -> Self {
        Self((v as i32) << FRAC_BITS)
    }

    /// Rounds to the nearest representable value; saturates outside the range.
    pub fn from_f64(v: f64) -> Self {
        let scaled = (v * ONE_RAW as f64).round();
        Self(scaled.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
    }

    /// Like [`FixedScalar::from_f64`] but rejects values outside the range.
    pub fn try_from_f64(v: f64) -> Result<Self, NumericError> {
        let scaled = (v * ONE_RAW as f64).round();
        if !scaled.is_finite() || scaled < i32::MIN as f64 || scaled > i32::MAX as f64 {
            return Err(NumericError::Overflow);
        }
        Ok(Self(scaled as i32))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE_RAW as f64
    }

    /// Narrows a Q16.16 value held in a wider integer.
    pub fn from_wide(raw: i64) -> Result<Self, NumericError> {
        i32::try_from(raw).map(Self).map_err(|_| NumericError::Overflow)
    }

    /// Narrows a value with 32 fractional bits, flooring the extra bits.
    pub fn from_q32(raw: i128) -> Result<Self, NumericError> {
        i32::try_from(raw >> FRAC_BITS)
            .map(Self)
            .map_err(|_| NumericError::Overflow)
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self, NumericError> {
        self.0.checked_add(rhs.0).map(Self).ok_or(NumericError::Overflow)
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self, NumericError> {
        self.0.checked_sub(rhs.0).map(Self).ok_or(NumericError::Overflow)
    }

    pub fn checked_mul(self, rhs: Self) -> Result<Self, NumericError> {
        let wide = (self.0 as i64) * (rhs.0 as i64);
        Self::from_wide(wide >> FRAC_BITS)
    }

    /// Floor division; errors on a zero divisor or an unrepresentable result.
    pub fn checked_div(self, rhs: Self) -> Result<Self, NumericError> {
        if rhs.0 == 0 {
            return Err(NumericError::DivisionByZero);
        }
        let num = (self.0 as i64) << FRAC_BITS;
        Self::from_wide(floor_div(num, rhs.0 as i64))
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

/// Integer division rounding toward negative infinity.
pub fn floor_div(num: i64, den: i64) -> i64 {
    let q = num / den;
    if num % den != 0 && ((num < 0) != (den < 0)) {
        q - 1
    } else {
        q
    }
}

impl Neg for FixedScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self(self.0.saturating_neg())
    }
}

impl fmt::Debug for FixedScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}q", self.to_f64())
    }
}

impl fmt::Display for FixedScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.to_f64())
    }
}

/// Floor of the mean of `values`; errors on an empty slice.
pub fn mean(values: &[FixedScalar]) -> Result<FixedScalar, NumericError> {
    if values.is_empty() {
        return Err(NumericError::Empty);
    }
    let sum: i64 = values.iter().map(|v| v.raw() as i64).sum();
    FixedScalar::from_wide(sum.div_euclid(values.len() as i64))
}

/// Floor integer square root by Newton iteration.
pub fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let bits = 128 - n.leading_zeros();
    let mut x = 1u128 << bits.div_ceil(2);
    loop {
        let y = (x + n / x) >> 1;
        if y >= x {
            return x;
        }
        x = y;
    }
}

/// Square root of a non-negative value with 32 fractional bits, returned as Q16.16.
pub fn sqrt_q32(sq: u128) -> Result<FixedScalar, NumericError> {
    let root = isqrt_u128(sq);
    i32::try_from(root)
        .map(FixedScalar::from_raw)
        .map_err(|_| NumericError::Overflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_truncates_toward_negative_infinity() {
        let a = FixedScalar::from_raw(3);
        let half = FixedScalar::from_f64(0.5);
        assert_eq!(a.checked_mul(half).unwrap().raw(), 1);
        assert_eq!((-a).checked_mul(half).unwrap().raw(), -2);
    }

    #[test]
    fn overflow_is_reported() {
        let big = FixedScalar::from_int(30000);
        assert_eq!(big.checked_add(big), Err(NumericError::Overflow));
        assert_eq!(big.checked_mul(big), Err(NumericError::Overflow));
        assert!(FixedScalar::try_from_f64(40000.0).is_err());
    }

    #[test]
    fn division_floors() {
        let one = FixedScalar::ONE;
        let three = FixedScalar::from_int(3);
        assert_eq!(one.checked_div(three).unwrap().raw(), 21845);
        assert_eq!((-one).checked_div(three).unwrap().raw(), -21846);
        assert_eq!(one.checked_div(-three).unwrap().raw(), -21846);
        assert_eq!(one.checked_div(FixedScalar::ZERO), Err(NumericError::DivisionByZero));
    }

    #[test]
    fn isqrt_matches_brute_force() {
        for n in 0u128..5000 {
            let r = isqrt_u128(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n, "n={n}");
        }
        let big = u128::MAX;
        let r = isqrt_u128(big);
        assert!(r.checked_mul(r).is_some_and(|v| v <= big));
        assert!((r + 1).checked_mul(r + 1).is_none_or(|v| v > big));
    }

    #[test]
    fn mean_floors() {
        let vals = [FixedScalar::from_raw(1), FixedScalar::from_raw(2)];
        assert_eq!(mean(&vals).unwrap().raw(), 1);
        let neg = [FixedScalar::from_raw(-1), FixedScalar::from_raw(-2)];
        assert_eq!(mean(&neg).unwrap().raw(), -2);
        assert_eq!(mean(&[]), Err(NumericError::Empty));
    }
}
