//! Scalar abstraction shared by the solvers.
//!
//! Everything numeric in this crate runs in one of two backends: plain `f64`
//! with small tolerances, or exact `BigRational` arithmetic for the
//! enumeration-scale oracles. The [`Scalar`] trait is the common surface; the
//! LP kernel, the matching solver and the best-response DPs are generic over
//! it so the same code path can be checked exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A field element the solvers can compute with.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// True when arithmetic is exact and comparisons need no tolerance.
    const EXACT: bool;

    fn from_ratio(num: i64, den: i64) -> Self;

    fn from_int(v: i64) -> Self {
        Self::from_ratio(v, 1)
    }

    /// Inject an exact rational into this backend (lossless for rationals,
    /// nearest for floats).
    fn from_rational(q: &BigRational) -> Self;

    fn to_f64(&self) -> f64;

    /// Comparison slack: zero for exact backends, 1e-9 for floats.
    fn tol() -> Self;

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }

    /// `true` when `self` is within `tol` of zero.
    fn is_negligible(&self) -> bool {
        self.abs() <= Self::tol()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_rational(q: &BigRational) -> Self {
        ToPrimitive::to_f64(q).expect("finite rational")
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn tol() -> Self {
        1e-9
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn tol() -> Self {
        BigRational::zero()
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `1 / 2^k` as an exact rational.
pub fn dyadic(k: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2u64) << k >> 1)
}

/// Format a dyadic rational as the wire form `"1/2^k"` (or `"1"` for k = 0).
pub fn dyadic_string(k: u32) -> String {
    if k == 0 {
        "1".to_string()
    } else {
        format!("1/2^{k}")
    }
}

/// An extended-real cost. Infinity is a distinguished sentinel ("never
/// finds/fails"), never a large float, and ties with itself.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Cost::Infinite)
    }

    /// Total order with `Infinite` ties `Infinite` above all finite values.
    pub fn compare(&self, other: &Cost) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Cost::Infinite, Cost::Infinite) => Equal,
            (Cost::Infinite, Cost::Finite(_)) => Greater,
            (Cost::Finite(_), Cost::Infinite) => Less,
            (Cost::Finite(a), Cost::Finite(b)) => a.partial_cmp(b).expect("NaN cost"),
        }
    }
}

impl From<f64> for Cost {
    fn from(v: f64) -> Self {
        Cost::Finite(v)
    }
}
